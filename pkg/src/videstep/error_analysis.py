"""Error propagation analysis for the Euler-Trapezium methods.

Notation: Delta_i = w_i - y(x_i) is the global error at node i and eps_i
is the local error, the error committed by one step seeded entirely with
exact history. For the implicit method the seeded step still solves its
step equation, so its local error is measured at the solved value.

Global errors obey an exact propagation recurrence on problems linear in
y (and an O(h)-consistent one otherwise, with jacobians evaluated at
computed values as a surrogate for the unknowable Taylor points). With
the per-node amplification factors

    explicit:  alpha_i  = 1 + h*f_y(x_i, w_i) + (h**2/2)*K_y(x_i, w_i, x_i)
    implicit:  aalpha_i = (1 + h**2*K_y(x_i, w_i, x_i)) / D_{i+1},
               D_{i+1}  = 1 - h*f_y(x_{i+1}, w_{i+1})
                            - (h**2/2)*K_y(x_{i+1}, w_{i+1}, x_{i+1}),

and the memory moment s_i = sum_{j=1}^{i-1} Delta_j*K_y(x_j, w_j, x_j),
the recurrences (assuming Delta_0 = 0) read

    explicit:  Delta_{i+1} = eps_{i+1} + h**2*s_i + alpha_i*Delta_i
    implicit:  Delta_{i+1} = eps_{i+1} + (h**2/D_{i+1})*s_i + aalpha_i*Delta_i.

Running either recurrence backwards recovers the local errors from a
global error curve; running it forwards gives the residual check that the
identity actually holds on a given run.

Bounding |Delta_i| by a geometric sum with uniform growth rate L and
amplitude C_tilde (|eps_tilde_i| <= C_tilde*h**2) yields the three-case
envelope

    L > 0 or L < 0:  U_i = |(C_tilde*h/L) * (exp((x_i - x0)*L) - 1)|
    L = 0:           U_i = C_tilde*(x_i - x0)*h,

where L is, for the explicit method, the node maximum of
f_y + (h/2)*K_y when that is positive somewhere and minus the maximum
magnitude when it is negative everywhere; for the implicit method the
same logic is applied to (f_y + (3h/2)*K_y)/(1 - h*f_y - (h**2/2)*K_y).
For strongly negative L the envelope plateaus at |C_tilde*h/L|. The
amplitude is estimated empirically from a run via

    |C_tilde_i*h/L| = |Delta_i| / |exp((x_i - x0)*L) - 1|,

whose running maximum makes the bound dominate the observed errors at
every estimated node by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Mesh, Method, Trajectory, VideProblem, make_mesh
from .errors import (
    ConfigurationWarning,
    DegenerateDenominator,
    LengthMismatch,
    MissingExact,
    MissingJacobian,
    SingularDenominator,
    ZeroError,
)
from .steppers import ImplicitSolveConfig, explicit_step, implicit_step, integrate

__all__ = [
    "ErrorSource",
    "ErrorReport",
    "SignCase",
    "BoundModel",
    "global_errors",
    "auto_reference",
    "propagation_coefficient_explicit",
    "propagation_coefficient_implicit",
    "propagation_coefficients",
    "growth_rate_L",
    "estimate_C_tilde",
    "estimate_C_tilde_zero",
    "signed_c_curve",
    "fit_bound",
    "error_bound",
    "recover_local_errors",
    "direct_local_errors",
    "pairwise_order",
    "endpoint_error",
    "observed_order",
    "propagation_residual",
]

# |L| at or below this selects the Zero bound branch; below rounding noise
# the geometric-sum formula is numerically meaningless.
ZERO_L_TOL = 1e-14

# Nodes whose estimation denominator |exp((x-x0)L) - 1| falls below this
# are skipped (0/0 at the left endpoint).
DENOMINATOR_FLOOR = 1e-12

# Stepsize ratio used when measuring errors against a reference run:
# first-order accuracy makes the reference error ~100x smaller, so it
# contaminates the measured Delta by at most ~1%.
REFERENCE_REFINEMENT = 100


class ErrorSource(str, Enum):
    """What the global errors were measured against."""

    AGAINST_EXACT = "against-exact"
    AGAINST_REFERENCE_RUN = "against-reference-run"


@dataclass
class ErrorReport:
    """Per-node error data for one run.

    ``deltas`` are the signed global errors, ``local_errors`` the signed
    local errors (recovered or directly measured), ``alphas`` the
    propagation coefficients. All arrays follow the trajectory's node
    indexing; the implicit coefficient pairs node i with node i+1, so its
    final entry is NaN.
    """

    deltas: np.ndarray
    local_errors: np.ndarray
    alphas: np.ndarray
    source: ErrorSource


class SignCase(str, Enum):
    """Which branch of the global bound applies."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    ZERO = "zero"


@dataclass(frozen=True)
class BoundModel:
    """Fitted global-error envelope: growth rate, amplitude, and branch.

    ``C_tilde`` is the amplitude max|C_tilde_i| (non-negative); in the
    Zero case it is estimated directly, otherwise it is the plateau value
    max|C_tilde_i*h/L| rescaled by |L|/h.
    """

    L: float
    C_tilde: float
    sign_case: SignCase
    h: float


def _eval_on_nodes(fn, nodes: np.ndarray) -> np.ndarray:
    """Evaluate a scalar function on all nodes, vectorised when possible."""
    try:
        out = np.asarray(fn(nodes), dtype=float)
        if out.shape != nodes.shape:
            out = np.broadcast_to(out, nodes.shape)
    except (TypeError, ValueError):
        out = np.array([float(fn(x)) for x in nodes])
    return out


def global_errors(trajectory: Trajectory, problem: VideProblem,
                  reference: Trajectory | None = None) -> np.ndarray:
    """Signed global errors Delta_i = w_i - y(x_i) per node.

    Uses the problem's exact solution when present, otherwise the supplied
    reference trajectory (a finer run of the same method on the same
    interval, stepsize an integer divisor of this run's). For a truncated
    (overflowed) run the errors cover the emitted nodes only.

    Raises
    ------
    MissingExact
        Neither an exact solution nor a reference trajectory is available.
    LengthMismatch
        The reference trajectory does not align with this run's nodes.
    """
    w = trajectory.w
    nodes = trajectory.mesh.nodes()[: w.size]
    if problem.exact is not None:
        return w - _eval_on_nodes(problem.exact, nodes)
    if reference is None:
        raise MissingExact("problem has no exact solution and no reference run given")
    rmesh = reference.mesh
    mesh = trajectory.mesh
    ratio = int(round(mesh.h / rmesh.h))
    if (
        ratio < 1
        or abs(ratio * rmesh.h - mesh.h) > 1e-9 * mesh.h
        or abs(rmesh.x0 - mesh.x0) > 1e-12 * max(1.0, abs(mesh.x0))
        or reference.w.size <= ratio * (w.size - 1)
    ):
        raise LengthMismatch("reference run does not align with the trajectory nodes")
    return w - reference.w[: ratio * w.size : ratio]


def auto_reference(problem: VideProblem, trajectory: Trajectory,
                   cfg: ImplicitSolveConfig | None = None) -> Trajectory:
    """Reference run for a problem without exact solution: same method,
    same interval, stepsize refined by a factor of 100."""
    mesh = trajectory.mesh
    fine = make_mesh(mesh.x0, mesh.xf, mesh.h / REFERENCE_REFINEMENT)
    return integrate(problem, fine, trajectory.method, cfg)


def _require_jacobians(problem: VideProblem) -> None:
    if problem.f_y is None or problem.kernel_y is None:
        raise MissingJacobian("operation requires f_y and kernel_y")


def propagation_coefficient_explicit(problem: VideProblem, x: float,
                                     y_at: float, h: float) -> float:
    """Explicit amplification factor alpha = 1 + h*f_y + (h**2/2)*K_y at (x, y_at)."""
    _require_jacobians(problem)
    return (1.0 + h * problem.f_y(x, y_at)
            + 0.5 * h * h * problem.kernel_y(x, y_at, x))


def propagation_coefficient_implicit(problem: VideProblem, x_i: float,
                                     x_next: float, y_i: float, y_next: float,
                                     h: float) -> float:
    """Implicit amplification factor pairing node i with node i+1:

    (1 + h**2*K_y(x_i, y_i, x_i)) /
    (1 - h*f_y(x_next, y_next) - (h**2/2)*K_y(x_next, y_next, x_next)).
    """
    _require_jacobians(problem)
    num = 1.0 + h * h * problem.kernel_y(x_i, y_i, x_i)
    den = (1.0 - h * problem.f_y(x_next, y_next)
           - 0.5 * h * h * problem.kernel_y(x_next, y_next, x_next))
    if abs(den) <= ZERO_L_TOL:
        raise SingularDenominator(f"propagation denominator {den:.3e} at x={x_next}")
    return num / den


def propagation_coefficients(problem: VideProblem,
                             trajectory: Trajectory) -> np.ndarray:
    """Per-node amplification factors along a run.

    Explicit runs fill every node; implicit runs pair node i with i+1 and
    leave the final entry NaN.
    """
    _require_jacobians(problem)
    w = trajectory.w
    h = trajectory.mesh.h
    nodes = trajectory.mesh.nodes()[: w.size]
    alphas = np.full(w.size, np.nan)
    if trajectory.method == Method.EXPLICIT:
        for i in range(w.size):
            alphas[i] = propagation_coefficient_explicit(problem, nodes[i], w[i], h)
    else:
        for i in range(w.size - 1):
            alphas[i] = propagation_coefficient_implicit(
                problem, nodes[i], nodes[i + 1], w[i], w[i + 1], h)
    return alphas


def growth_rate_L(problem: VideProblem, trajectory: Trajectory,
                  method: Method) -> float:
    """Growth rate L of the global bound, from per-node jacobian data.

    Explicit: the node maximum of g_i = f_y + (h/2)*K_y when positive
    somewhere; when negative everywhere, minus the maximum magnitude.
    Implicit: the same selection applied to the per-node values of
    (f_y + (3h/2)*K_y) / (1 - h*f_y - (h**2/2)*K_y), which reduces to the
    constant-coefficient formula on problems with constant jacobians and
    is a documented heuristic otherwise.
    """
    _require_jacobians(problem)
    w = trajectory.w
    h = trajectory.mesh.h
    nodes = trajectory.mesh.nodes()[: w.size]
    g = np.empty(w.size)
    for i in range(w.size):
        fy = problem.f_y(nodes[i], w[i])
        ky = problem.kernel_y(nodes[i], w[i], nodes[i])
        if method == Method.EXPLICIT:
            g[i] = fy + 0.5 * h * ky
        else:
            den = 1.0 - h * fy - 0.5 * h * h * ky
            if abs(den) <= ZERO_L_TOL:
                raise SingularDenominator(
                    f"growth-rate denominator {den:.3e} at x={nodes[i]}")
            g[i] = (fy + 1.5 * h * ky) / den
    g_max = float(np.max(g))
    g_abs_max = float(np.max(np.abs(g)))
    if g_max > ZERO_L_TOL:
        return g_max
    if g_abs_max <= ZERO_L_TOL:
        return 0.0
    return -g_abs_max


def estimate_C_tilde(deltas, L: float, mesh: Mesh) -> tuple[np.ndarray, float]:
    """Empirical bound-amplitude curve |C_tilde_i*h/L| and its running maximum.

    Per node, |Delta_i| / |exp((x_i - x0)*L) - 1|, skipping node 0 and any
    node whose denominator is below 1e-12 (those entries are NaN in the
    returned curve).

    Raises
    ------
    DegenerateDenominator
        Every node is excluded (as happens when L = 0; use
        estimate_C_tilde_zero there).
    """
    deltas = np.asarray(deltas, dtype=float)
    xs = mesh.nodes()[: deltas.size]
    den = np.abs(np.expm1(L * (xs - mesh.x0)))
    mask = den > DENOMINATOR_FLOOR
    if not mask.any():
        raise DegenerateDenominator(
            "no node has |exp((x-x0)L) - 1| above 1e-12; Zero-case bound applies")
    curve = np.full(deltas.size, np.nan)
    curve[mask] = np.abs(deltas[mask]) / den[mask]
    return curve, float(np.max(curve[mask]))


def estimate_C_tilde_zero(deltas, mesh: Mesh) -> tuple[np.ndarray, float]:
    """Zero-case analogue of estimate_C_tilde: |C_tilde_i| = |Delta_i| / ((x_i - x0)*h),
    skipping node 0, plus the running maximum."""
    deltas = np.asarray(deltas, dtype=float)
    xs = mesh.nodes()[: deltas.size]
    den = (xs - mesh.x0) * mesh.h
    mask = den > 0.0
    if not mask.any():
        raise DegenerateDenominator("no node with x > x0 to estimate from")
    curve = np.full(deltas.size, np.nan)
    curve[mask] = np.abs(deltas[mask]) / den[mask]
    return curve, float(np.max(curve[mask]))


def signed_c_curve(deltas, L: float, mesh: Mesh) -> np.ndarray:
    """Signed per-node curve C_tilde_i*h/L = Delta_i / (exp((x_i - x0)*L) - 1),
    NaN where the denominator is below 1e-12. Crosses zero exactly where
    the global error does."""
    deltas = np.asarray(deltas, dtype=float)
    xs = mesh.nodes()[: deltas.size]
    den = np.expm1(L * (xs - mesh.x0))
    curve = np.full(deltas.size, np.nan)
    mask = np.abs(den) > DENOMINATOR_FLOOR
    curve[mask] = deltas[mask] / den[mask]
    return curve


def fit_bound(problem: VideProblem, trajectory: Trajectory, deltas,
              method: Method | None = None) -> tuple[BoundModel, np.ndarray]:
    """Fit the three-case bound to a run: growth rate, amplitude, branch.

    Returns the model together with the per-node estimation curve
    (|C_tilde_i*h/L|, or |C_tilde_i| in the Zero case). Warns with
    ConfigurationWarning when the Negative branch's stepsize condition
    1 + h*L > 0 fails, in which case the bound is reported but not
    meaningful.
    """
    if method is None:
        method = trajectory.method
    L = growth_rate_L(problem, trajectory, method)
    h = trajectory.mesh.h
    if abs(L) <= ZERO_L_TOL:
        curve, c_max = estimate_C_tilde_zero(deltas, trajectory.mesh)
        return BoundModel(L=0.0, C_tilde=c_max, sign_case=SignCase.ZERO, h=h), curve
    curve, c_max = estimate_C_tilde(deltas, L, trajectory.mesh)
    if L > 0.0:
        case = SignCase.POSITIVE
    else:
        case = SignCase.NEGATIVE
        if 1.0 + h * L <= 0.0:
            warnings.warn(
                f"1 + h*L = {1.0 + h * L:.3g} <= 0: stepsize too large for the "
                "negative-case bound to hold",
                ConfigurationWarning,
                stacklevel=2,
            )
    amplitude = c_max * abs(L) / h
    return BoundModel(L=L, C_tilde=amplitude, sign_case=case, h=h), curve


def error_bound(model: BoundModel, mesh: Mesh) -> np.ndarray:
    """Bound curve U_i at every mesh node.

    Positive/Negative: U_i = |(C_tilde*h/L) * (exp((x_i - x0)*L) - 1)|;
    Zero: U_i = C_tilde*(x_i - x0)*h. U_0 = 0 in every case. For strongly
    negative L the curve plateaus at |C_tilde*h/L|.
    """
    xs = mesh.nodes()
    if model.sign_case == SignCase.ZERO:
        return model.C_tilde * (xs - mesh.x0) * model.h
    return np.abs(model.C_tilde * model.h / model.L * np.expm1(model.L * (xs - mesh.x0)))


def _memory_moments(problem: VideProblem, nodes: np.ndarray, w: np.ndarray,
                    deltas: np.ndarray) -> np.ndarray:
    """Prefix sums s_i = sum_{j=1}^{i-1} Delta_j*K_y(x_j, w_j, x_j) for all i."""
    q = np.zeros(w.size)
    for j in range(1, w.size):
        q[j] = deltas[j] * problem.kernel_y(nodes[j], w[j], nodes[j])
    s = np.zeros(w.size)
    # s[i] accumulates q[1..i-1]
    for i in range(2, w.size):
        s[i] = s[i - 1] + q[i - 1]
    return s


def recover_local_errors(deltas, problem: VideProblem,
                         trajectory: Trajectory) -> np.ndarray:
    """Run the propagation recurrence backwards: local errors from global ones.

    Explicit: eps_{i+1} = Delta_{i+1} - alpha_i*Delta_i - h**2*s_i, so
    eps_1 = Delta_1 and eps_2 = Delta_2 - alpha_1*Delta_1. Implicit:
    eps_{i+1} = Delta_{i+1} - aalpha_i*Delta_i - (h**2/D_{i+1})*s_i.
    Exact on problems linear in y; jacobians are evaluated at computed
    values otherwise. Entry 0 is 0.
    """
    _require_jacobians(problem)
    deltas = np.asarray(deltas, dtype=float)
    w = trajectory.w
    if deltas.size != w.size:
        raise LengthMismatch(f"{deltas.size} deltas for {w.size} nodes")
    mesh = trajectory.mesh
    h = mesh.h
    nodes = mesh.nodes()[: w.size]
    s = _memory_moments(problem, nodes, w, deltas)
    alphas = propagation_coefficients(problem, trajectory)
    eps = np.zeros(w.size)
    for i in range(w.size - 1):
        memory = h * h * s[i]
        if trajectory.method == Method.IMPLICIT:
            den = (1.0 - h * problem.f_y(nodes[i + 1], w[i + 1])
                   - 0.5 * h * h * problem.kernel_y(nodes[i + 1], w[i + 1], nodes[i + 1]))
            memory = memory / den
        eps[i + 1] = deltas[i + 1] - alphas[i] * deltas[i] - memory
    return eps


def propagation_residual(deltas, local, problem: VideProblem,
                         trajectory: Trajectory) -> np.ndarray:
    """Run the propagation recurrence forwards and report its defect.

    r_{i+1} = Delta_{i+1} - eps_{i+1} - (memory term) - alpha_i*Delta_i,
    with the memory term as in recover_local_errors. Machine-zero for
    problems linear in y; O(h*max|Delta|**2) otherwise.
    """
    deltas = np.asarray(deltas, dtype=float)
    local = np.asarray(local, dtype=float)
    if deltas.size != local.size:
        raise LengthMismatch(f"{deltas.size} deltas vs {local.size} local errors")
    recovered = recover_local_errors(deltas, problem, trajectory)
    residual = np.zeros(deltas.size)
    residual[1:] = recovered[1:] - local[1:]
    return residual


def direct_local_errors(problem: VideProblem, mesh: Mesh, method: Method,
                        cfg: ImplicitSolveConfig | None = None) -> np.ndarray:
    """Local errors measured directly: one step from exact history, minus exact.

    eps_{i+1} = M(y(x_0)..y(x_i)) - y(x_{i+1}) with M the selected method;
    the implicit M solves its step equation seeded with the true history.
    Entry 0 is 0. O(h**2) per entry on smooth problems.
    """
    if problem.exact is None:
        raise MissingExact("direct local errors need the exact solution")
    y = _eval_on_nodes(problem.exact, mesh.nodes())
    eps = np.zeros(mesh.n_steps + 1)
    for i in range(mesh.n_steps):
        if method == Method.EXPLICIT:
            predicted = explicit_step(problem, y, mesh, i)
        else:
            predicted, _ = implicit_step(problem, y, mesh, i, cfg)
        eps[i + 1] = predicted - y[i + 1]
    return eps


def pairwise_order(err1: float, err2: float, h1: float, h2: float) -> float:
    """Observed order p = ln(err1/err2) / ln(h1/h2) from two error magnitudes.

    Raises ZeroError when either magnitude is below 1e-15 (the ratio is
    then rounding noise, so the order is undefined).
    """
    err1, err2 = abs(err1), abs(err2)
    if err1 < 1e-15 or err2 < 1e-15:
        raise ZeroError("error magnitude below 1e-15; order undefined")
    return math.log(err1 / err2) / math.log(h1 / h2)


def endpoint_error(problem: VideProblem, x_d: float, h: float, method: Method,
                   cfg: ImplicitSolveConfig | None = None,
                   x0: float = 0.0) -> float:
    """Signed global error at x_d from one run over [x0, x_d] at stepsize h.

    Problems without an exact solution are measured against a reference
    run refined by a factor of 100.
    """
    mesh = make_mesh(x0, x_d, h)
    trajectory = integrate(problem, mesh, method, cfg)
    if trajectory.overflow_at is not None:
        raise ZeroError("trajectory diverged before x_d; error there undefined")
    reference = None
    if problem.exact is None:
        reference = auto_reference(problem, trajectory, cfg)
    return float(global_errors(trajectory, problem, reference)[-1])


def observed_order(problem: VideProblem, x_d: float, h1: float, h2: float,
                   method: Method, cfg: ImplicitSolveConfig | None = None,
                   x0: float = 0.0) -> float:
    """Observed convergence order from two runs compared at the node x_d.

    Both stepsizes must tile [x0, x_d].
    """
    return pairwise_order(endpoint_error(problem, x_d, h1, method, cfg, x0),
                          endpoint_error(problem, x_d, h2, method, cfg, x0),
                          h1, h2)
