import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videstep import (
    ImplicitSolveConfig,
    Method,
    MissingJacobian,
    NoConvergence,
    OVERFLOW_CUTOFF,
    SingularJacobian,
    SolveStrategy,
    StepEvaluationError,
    TestEquationParams,
    VideProblem,
    constant_kernel,
    explicit_step,
    history_sum,
    implicit_step,
    integrate,
    make_mesh,
    pure_ode,
    test_equation,
)


def identity_problem():
    return VideProblem(
        f=lambda x, y: 0.0,
        kernel=lambda x, y, t: 0.0 * y,
        y0=2.0,
        f_y=lambda x, y: 0.0,
        kernel_y=lambda x, y, t: 0.0,
    )


# --- history_sum ------------------------------------------------------------


@pytest.mark.parametrize("kernel", [
    lambda x, y, t: 1e6 * np.ones_like(np.asarray(y, dtype=float)),
    lambda x, y, t: -3.0 * y,
    lambda x, y, t: np.exp(y) + x * t,
])
def test_history_sum_first_node_is_exactly_zero(kernel):
    # trapezium weights cancel at last_index=0: 2K - K - K, whatever K is
    problem = VideProblem(f=lambda x, y: 0.0, kernel=kernel, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    assert history_sum(problem, [1.0], mesh, outer_index=0, last_index=0) == 0.0
    assert history_sum(problem, [1.0, 5.0], mesh, outer_index=3, last_index=0) == 0.0


@given(i=st.integers(min_value=1, max_value=40),
       h=st.floats(min_value=1e-3, max_value=0.5))
@settings(max_examples=60, deadline=None)
def test_history_sum_constant_kernel_closed_form(i, h):
    # K = 1: (h**2/2)*(2*(i+1) - 2) = i*h**2, independent of the values
    problem = constant_kernel()
    mesh = make_mesh(0.0, 41 * h, h)
    values = np.linspace(1.0, 2.0, i + 1)
    got = history_sum(problem, values, mesh, outer_index=i, last_index=i)
    assert got == pytest.approx(i * h * h, rel=1e-13)


def test_history_sum_worked_example():
    # gamma=-2, h=0.1, values {2, 1.9, 1.8}:
    # (h**2/2)*gamma*(2*(2+1.9+1.8) - 2 - 1.8) = 0.005*(-2)*7.6 = -0.076
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 1.0, 0.1)
    values = [2.0, 1.9, 1.8]
    got = history_sum(problem, values, mesh, outer_index=2, last_index=2)
    assert got == pytest.approx(-0.076, rel=1e-13)


def test_history_sum_matches_independent_trapezium():
    # h * (composite trapezium of the kernel row) re-derived without the
    # weighted-sum form
    params = TestEquationParams(lam=-1.0, gamma=-2.0)
    problem = test_equation(params)
    mesh = make_mesh(0.0, 1.0, 0.1)
    values = np.array([2.0, 1.9, 1.8, 1.75])
    nodes = mesh.nodes()[:4]
    row = params.gamma * values
    expected = mesh.h * np.trapezoid(row, nodes)
    got = history_sum(problem, values, mesh, outer_index=3, last_index=3)
    assert got == pytest.approx(expected, rel=1e-13)


def test_history_sum_outer_abscissa_matters():
    # K depends on its first argument; outer_index selects it
    problem = VideProblem(f=lambda x, y: 0.0,
                          kernel=lambda x, y, t: x * y, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    values = [1.0, 1.0, 1.0]
    at2 = history_sum(problem, values, mesh, outer_index=2, last_index=2)
    at5 = history_sum(problem, values, mesh, outer_index=5, last_index=2)
    assert at5 == pytest.approx(at2 * mesh.node(5) / mesh.node(2), rel=1e-13)


def test_history_sum_index_preconditions():
    from videstep import IndexOutOfRange

    problem = constant_kernel()
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(IndexOutOfRange):
        history_sum(problem, [1.0, 1.0], mesh, outer_index=1, last_index=2)
    with pytest.raises(IndexOutOfRange):
        history_sum(problem, [1.0, 1.0], mesh, outer_index=11, last_index=1)
    with pytest.raises(IndexOutOfRange):
        # values too short for last_index
        history_sum(problem, [1.0, 1.0], mesh, outer_index=3, last_index=3)


def test_history_sum_scalar_only_kernel_falls_back():
    # a kernel using math.* cannot take arrays; results must agree anyway
    vec = VideProblem(f=lambda x, y: 0.0,
                      kernel=lambda x, y, t: np.exp(-y) + t, y0=1.0)
    scl = VideProblem(f=lambda x, y: 0.0,
                      kernel=lambda x, y, t: math.exp(-y) + t, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    values = np.array([1.0, 0.9, 0.8])
    a = history_sum(vec, values, mesh, outer_index=2, last_index=2)
    b = history_sum(scl, values, mesh, outer_index=2, last_index=2)
    assert a == pytest.approx(b, rel=1e-15)


# --- explicit_step ----------------------------------------------------------


def test_explicit_step_worked_example():
    # lam=-1, gamma=-2, h=0.005, w0=2: w1 = 2 + 0.005*(-1)*(2-1) = 1.995
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 0.05, 0.005)
    assert explicit_step(problem, [2.0], mesh, 0) == pytest.approx(1.995, rel=1e-14)


def test_explicit_first_step_has_no_kernel_term():
    # even a large kernel contributes nothing at i=0
    huge = VideProblem(f=lambda x, y: -y,
                       kernel=lambda x, y, t: 1e9 * np.ones_like(np.asarray(y, dtype=float)),
                       y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    assert explicit_step(huge, [1.0], mesh, 0) == pytest.approx(1.0 + 0.1 * (-1.0))


def test_explicit_step_identity_dynamics():
    mesh = make_mesh(0.0, 1.0, 0.1)
    assert explicit_step(identity_problem(), [2.0, 2.0], mesh, 1) == 2.0


def test_explicit_step_constant_rhs():
    problem = VideProblem(f=lambda x, y: 1.0,
                          kernel=lambda x, y, t: 0.0 * y, y0=3.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    assert explicit_step(problem, [3.0, 3.1], mesh, 1) == pytest.approx(3.2, rel=1e-14)


def test_explicit_step_wraps_callback_failure():
    bad = VideProblem(f=lambda x, y: 1.0 / 0.0,
                      kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(StepEvaluationError):
        explicit_step(bad, [1.0], mesh, 0)


def test_explicit_step_rejects_nonfinite_callback():
    bad = VideProblem(f=lambda x, y: float("nan"),
                      kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(StepEvaluationError):
        explicit_step(bad, [1.0], mesh, 0)


# --- implicit_step ----------------------------------------------------------


def test_implicit_step_linear_closed_form():
    # lam=-1, gamma=-2, h=0.1, w0=2: the step equation is linear,
    # 1.11*u = 2.08, solved exactly without iteration
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 1.0, 0.1)
    w1, diag = implicit_step(problem, [2.0], mesh, 0)
    assert w1 == pytest.approx(2.08 / 1.11, rel=1e-11)
    assert diag.iterations == 2
    assert diag.last_residual <= 1e-14 + 1e-12 * abs(w1)


def test_implicit_step_identity_dynamics_one_iteration():
    mesh = make_mesh(0.0, 1.0, 0.1)
    w1, diag = implicit_step(identity_problem(), [2.0], mesh, 0)
    assert w1 == 2.0
    assert diag.iterations == 1


def test_implicit_step_residual_contract():
    # re-derive R(u) independently and check the accepted value satisfies it
    params = TestEquationParams(lam=-1.0, gamma=-2.0)
    problem = test_equation(params)
    mesh = make_mesh(0.0, 1.0, 0.1)
    values = [2.0, 1.87]
    cfg = ImplicitSolveConfig()
    u, _ = implicit_step(problem, values, mesh, 1, cfg)
    h = mesh.h
    x2 = mesh.node(2)
    kernel_row = params.gamma * np.array([2.0, 1.87])
    residual = (u - values[1] - h * params.lam * (u - 1.0)
                - 0.5 * h * h * (2.0 * kernel_row.sum() - kernel_row[0]
                                 + params.gamma * u))
    assert x2 == pytest.approx(0.2)
    assert abs(residual) <= cfg.abs_tol + cfg.rel_tol * abs(u)


def test_implicit_step_stiff_stays_bounded_where_explicit_grows():
    problem = test_equation(TestEquationParams(lam=-100.0, gamma=-200.0))
    mesh = make_mesh(0.0, 2.0, 0.05)
    w1_implicit, _ = implicit_step(problem, [2.0], mesh, 0)
    w1_explicit = explicit_step(problem, [2.0], mesh, 0)
    assert abs(w1_implicit) <= 2.0
    assert abs(w1_explicit) > 2.0


def test_implicit_fixed_point_matches_newton():
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 1.0, 0.1)
    newton, _ = implicit_step(problem, [2.0], mesh, 0,
                              ImplicitSolveConfig(strategy=SolveStrategy.NEWTON_WITH_JACOBIANS))
    fixed, diag = implicit_step(problem, [2.0], mesh, 0,
                                ImplicitSolveConfig(strategy=SolveStrategy.FIXED_POINT))
    assert fixed == pytest.approx(newton, abs=1e-10)
    assert diag.iterations > 2  # contraction is slower than Newton


def test_implicit_fixed_point_needs_no_jacobians():
    problem = VideProblem(f=lambda x, y: -y,
                          kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    w1, _ = implicit_step(problem, [1.0], mesh, 0,
                          ImplicitSolveConfig(strategy=SolveStrategy.FIXED_POINT))
    assert w1 == pytest.approx(1.0 / 1.1, rel=1e-10)


def test_implicit_newton_requires_jacobians():
    problem = VideProblem(f=lambda x, y: -y,
                          kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(MissingJacobian):
        implicit_step(problem, [1.0], mesh, 0)


def test_implicit_no_convergence_reports_state():
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 1.0, 0.1)
    with pytest.raises(NoConvergence) as excinfo:
        implicit_step(problem, [2.0], mesh, 0,
                      ImplicitSolveConfig(max_iterations=1))
    assert excinfo.value.iterations == 1
    assert excinfo.value.last_residual > 0.0


def test_implicit_singular_jacobian():
    # f_y = 1/h makes the Newton denominator exactly zero
    h = 0.1
    problem = VideProblem(f=lambda x, y: y / h,
                          kernel=lambda x, y, t: 0.0 * y, y0=1.0,
                          f_y=lambda x, y: 1.0 / h,
                          kernel_y=lambda x, y, t: 0.0)
    mesh = make_mesh(0.0, 1.0, h)
    with pytest.raises(SingularJacobian):
        implicit_step(problem, [1.0], mesh, 0)


@pytest.mark.parametrize("kwargs", [
    {"rel_tol": 0.0},
    {"abs_tol": -1.0},
    {"max_iterations": 0},
])
def test_solve_config_validation(kwargs):
    with pytest.raises(ValueError):
        ImplicitSolveConfig(**kwargs)


# --- integrate --------------------------------------------------------------


def test_integrate_initial_node_is_exact():
    problem = pure_ode(y0=0.3)
    trajectory = integrate(problem, make_mesh(0.0, 1.0, 0.1), Method.EXPLICIT)
    assert trajectory.w[0] == 0.3
    assert trajectory.w.size == 11
    assert len(trajectory.step_diagnostics) == 10


def test_integrate_identity_dynamics_constant_trajectory():
    trajectory = integrate(identity_problem(), make_mesh(0.0, 1.0, 0.1),
                           Method.EXPLICIT)
    assert np.all(trajectory.w == 2.0)


def test_integrate_explicit_tracks_exact_solution():
    # lam=-1, gamma=-2, h=5e-3 on [0,5]: global error stays under 5e-2
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    mesh = make_mesh(0.0, 5.0, 5e-3)
    trajectory = integrate(problem, mesh, Method.EXPLICIT)
    exact = problem.exact(mesh.nodes())
    assert float(np.max(np.abs(trajectory.w - exact))) < 5e-2


def test_integrate_explicit_diagnostics_are_zero():
    problem = pure_ode()
    trajectory = integrate(problem, make_mesh(0.0, 1.0, 0.1), Method.EXPLICIT)
    assert all(d.iterations == 0 for d in trajectory.step_diagnostics)


def test_integrate_stiff_explicit_diverges_at_paper_scale():
    # lam=-100, gamma=-200, h=5e-2 on [0,5]: growth reaches ~1e61
    problem = test_equation(TestEquationParams(lam=-100.0, gamma=-200.0))
    mesh = make_mesh(0.0, 5.0, 5e-2)
    trajectory = integrate(problem, mesh, Method.EXPLICIT)
    errors = trajectory.w - problem.exact(mesh.nodes()[: trajectory.w.size])
    peak = float(np.max(np.abs(errors)))
    assert 1e55 < peak < 1e70


def test_integrate_overflow_truncates_and_records():
    # w_{i+1} = 1001*w_i crosses 1e300 at step 100
    problem = VideProblem(f=lambda x, y: 1e3 * y,
                          kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    trajectory = integrate(problem, make_mesh(0.0, 120.0, 1.0), Method.EXPLICIT)
    assert trajectory.overflow_at == 100
    assert trajectory.w.size == 101
    assert abs(trajectory.w[-1]) > OVERFLOW_CUTOFF
    assert np.all(np.isfinite(trajectory.w))
    assert np.all(np.abs(trajectory.w[:-1]) <= OVERFLOW_CUTOFF)


def test_integrate_annotates_failing_step():
    def f(x, y):
        if x > 0.45:
            raise ValueError("boom")
        return -y

    problem = VideProblem(f=f, kernel=lambda x, y, t: 0.0 * y, y0=1.0)
    with pytest.raises(StepEvaluationError) as excinfo:
        integrate(problem, make_mesh(0.0, 1.0, 0.1), Method.EXPLICIT)
    # x_5 = 0.5 is the first rejected abscissa, consumed computing node 6
    assert excinfo.value.step_index == 6


def test_integrate_implicit_linear_iteration_counts():
    problem = test_equation(TestEquationParams(lam=-1.0, gamma=-2.0))
    trajectory = integrate(problem, make_mesh(0.0, 1.0, 0.1), Method.IMPLICIT)
    assert all(d.iterations == 2 for d in trajectory.step_diagnostics)


# --- Euler equivalence for a vanishing kernel -------------------------------


def euler_explicit(f, y0, mesh):
    w = np.empty(mesh.n_steps + 1)
    w[0] = y0
    for i in range(mesh.n_steps):
        w[i + 1] = w[i] + mesh.h * f(mesh.node(i), w[i])
    return w


def test_explicit_reduces_to_euler_without_kernel():
    problem = pure_ode(y0=1.0)
    mesh = make_mesh(0.0, 2.0, 0.05)
    trajectory = integrate(problem, mesh, Method.EXPLICIT)
    oracle = euler_explicit(lambda x, y: -y, 1.0, mesh)
    assert float(np.max(np.abs(trajectory.w - oracle))) <= 1e-12


def test_implicit_reduces_to_backward_euler_without_kernel():
    # y' = -y: backward Euler has the closed form w_{i+1} = w_i/(1+h)
    problem = pure_ode(y0=1.0)
    mesh = make_mesh(0.0, 2.0, 0.05)
    trajectory = integrate(problem, mesh, Method.IMPLICIT)
    oracle = np.array([1.0 / (1.0 + mesh.h) ** i for i in range(mesh.n_steps + 1)])
    assert float(np.max(np.abs(trajectory.w - oracle))) <= 1e-12
