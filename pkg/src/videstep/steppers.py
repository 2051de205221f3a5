"""Euler-Trapezium steppers for first-order Volterra integro-differential equations.

Both methods advance the differential part with Euler's method and
approximate the memory integral with the composite trapezium rule over the
nodes accumulated so far. Writing

    S(m, l; v) = (h**2/2) * ( sum_{j=0}^{l} 2*K(x_m, v_j, x_j)
                              - K(x_m, v_0, x_0) - K(x_m, v_l, x_l) ),

which is h times the trapezium approximation of the memory integral at x_m
using history values v_0..v_l, the two schemes are

    explicit:  w_{i+1} = w_i + h*f(x_i, w_i) + S(i, i; w)
    implicit:  w_{i+1} = w_i + h*f(x_{i+1}, w_{i+1}) + S(i+1, i+1; w)

with w_{i+1} appearing inside S in the implicit case. For i = 0 the
explicit kernel term vanishes identically (the trapezium weights cancel),
so the first explicit step is a plain Euler step.

The implicit update is solved per step as a scalar root-finding problem

    R(u) = u - w_i - h*f(x_{i+1}, u)
             - (h**2/2) * ( sum_{j=0}^{i} 2*K(x_{i+1}, w_j, x_j)
                            - K(x_{i+1}, w_0, x_0) + K(x_{i+1}, u, x_{i+1}) )

by Newton iteration with the scalar jacobian

    R'(u) = 1 - h*f_y(x_{i+1}, u) - (h**2/2)*kernel_y(x_{i+1}, u, x_{i+1}),

or by fixed-point iteration (the same update with denominator 1). The
unknown u carries net trapezium weight h**2/2: its endpoint correction
subtracts half of its interior weight. The history part of R is constant
during the solve and is computed once per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Mesh, Method, StepDiagnostics, Trajectory, VideProblem
from .errors import (
    IndexOutOfRange,
    MissingJacobian,
    NoConvergence,
    SingularJacobian,
    StepEvaluationError,
    VidestepError,
)

__all__ = [
    "SolveStrategy",
    "ImplicitSolveConfig",
    "history_sum",
    "explicit_step",
    "implicit_step",
    "integrate",
    "OVERFLOW_CUTOFF",
]

# Magnitude beyond which a trajectory is declared divergent and truncated.
OVERFLOW_CUTOFF = 1e300

# Newton denominators smaller than this are treated as singular.
JACOBIAN_FLOOR = 1e-14


class SolveStrategy(str, Enum):
    """How the implicit step equation is solved."""

    NEWTON_WITH_JACOBIANS = "newton"
    FIXED_POINT = "fixed-point"


@dataclass(frozen=True)
class ImplicitSolveConfig:
    """Per-step nonlinear solve settings for the implicit method.

    Convergence is declared when the step residual satisfies
    |R(u)| <= abs_tol + rel_tol*|u|. The tolerances sit far below the
    O(h**2) local error being studied so the solve contributes nothing
    visible to the error analysis.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iterations: int = 50
    strategy: SolveStrategy = SolveStrategy.NEWTON_WITH_JACOBIANS

    def __post_init__(self):
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0 or self.max_iterations < 1:
            raise ValueError("require rel_tol > 0, abs_tol > 0, max_iterations >= 1")


def _call(fn, *args) -> float:
    """Evaluate a user callback at scalar arguments, normalising failures."""
    try:
        value = float(fn(*args))
    except VidestepError:
        raise
    except Exception as exc:
        raise StepEvaluationError(f"callback failed at {args}") from exc
    if not math.isfinite(value):
        raise StepEvaluationError(f"callback returned non-finite value at {args}")
    return value


def _kernel_row(problem: VideProblem, x_outer: float, values: np.ndarray,
                nodes: np.ndarray) -> np.ndarray:
    """Evaluate K(x_outer, values[j], nodes[j]) for all j, vectorised when possible."""
    try:
        row = np.asarray(problem.kernel(x_outer, values, nodes), dtype=float)
        if row.shape != values.shape:
            row = np.broadcast_to(row, values.shape)
    except (TypeError, ValueError):
        # Kernel written for scalars only; fall back to a per-node loop.
        row = np.array([_call(problem.kernel, x_outer, values[j], nodes[j])
                        for j in range(values.size)])
    except VidestepError:
        raise
    except Exception as exc:
        raise StepEvaluationError(f"kernel failed at x={x_outer}") from exc
    return row


def history_sum(problem: VideProblem, values, mesh: Mesh,
                outer_index: int, last_index: int) -> float:
    """Weighted trapezium memory term S(outer_index, last_index; values).

    Computes (h**2/2) * (sum_{j=0..last} 2*K(x_outer, v_j, x_j)
    - K(x_outer, v_0, x_0) - K(x_outer, v_last, x_last)). For
    ``last_index == 0`` the weights cancel and the result is exactly 0.0,
    which is why the first explicit step has no kernel term.

    ``values`` must supply entries for indices 0..last_index; anything
    beyond is ignored.
    """
    if not 0 <= last_index <= outer_index <= mesh.n_steps:
        raise IndexOutOfRange(
            f"need 0 <= last_index <= outer_index <= {mesh.n_steps}, "
            f"got outer={outer_index}, last={last_index}"
        )
    values = np.asarray(values, dtype=float)
    if last_index >= values.size:
        raise IndexOutOfRange(
            f"history has {values.size} values, need {last_index + 1}"
        )
    if last_index == 0:
        return 0.0
    x_outer = mesh.node(outer_index)
    nodes = mesh.x0 + mesh.h * np.arange(last_index + 1)
    row = _kernel_row(problem, x_outer, values[: last_index + 1], nodes)
    total = 2.0 * float(np.sum(row)) - float(row[0]) - float(row[last_index])
    return 0.5 * mesh.h * mesh.h * total


def explicit_step(problem: VideProblem, values, mesh: Mesh, i: int) -> float:
    """Advance one node with the explicit method, given history values 0..i."""
    x_i = mesh.node(i)
    w_i = float(np.asarray(values)[i])
    return (w_i + mesh.h * _call(problem.f, x_i, w_i)
            + history_sum(problem, values, mesh, outer_index=i, last_index=i))


def implicit_step(problem: VideProblem, values, mesh: Mesh, i: int,
                  cfg: ImplicitSolveConfig | None = None,
                  ) -> tuple[float, StepDiagnostics]:
    """Advance one node with the implicit method, given history values 0..i.

    The step equation is solved to the tolerances in ``cfg`` (defaults if
    None), starting from the explicit-step value, which sits O(h) from the
    root. Returns the accepted value and the solve diagnostics.

    Raises
    ------
    MissingJacobian
        Newton strategy on a problem without f_y and kernel_y.
    SingularJacobian
        The Newton denominator fell below 1e-14 in magnitude.
    NoConvergence
        The iteration cap was reached with the residual above tolerance.
    """
    if cfg is None:
        cfg = ImplicitSolveConfig()
    newton = cfg.strategy == SolveStrategy.NEWTON_WITH_JACOBIANS
    if newton and (problem.f_y is None or problem.kernel_y is None):
        raise MissingJacobian("Newton strategy requires f_y and kernel_y")

    values = np.asarray(values, dtype=float)
    h = mesh.h
    x_next = mesh.node(i + 1)

    # Known part of the residual: w_i plus the kernel contribution of the
    # already-computed history, all evaluated at outer node i+1. Constant
    # during the solve.
    nodes = mesh.x0 + h * np.arange(i + 1)
    row = _kernel_row(problem, x_next, values[: i + 1], nodes)
    known = float(values[i]) + 0.5 * h * h * (2.0 * float(np.sum(row)) - float(row[0]))

    def residual(u: float) -> float:
        return (u - known - h * _call(problem.f, x_next, u)
                - 0.5 * h * h * _call(problem.kernel, x_next, u, x_next))

    u = explicit_step(problem, values, mesh, i)
    for k in range(1, cfg.max_iterations + 1):
        r = residual(u)
        if abs(r) <= cfg.abs_tol + cfg.rel_tol * abs(u):
            return u, StepDiagnostics(iterations=k, last_residual=abs(r))
        if k == cfg.max_iterations:
            raise NoConvergence(iterations=k, last_residual=abs(r))
        if newton:
            d = (1.0 - h * _call(problem.f_y, x_next, u)
                 - 0.5 * h * h * _call(problem.kernel_y, x_next, u, x_next))
            if abs(d) < JACOBIAN_FLOOR:
                raise SingularJacobian(f"Newton denominator {d:.3e} at x={x_next}")
            u = u - r / d
        else:
            u = u - r
    raise AssertionError("unreachable")


def integrate(problem: VideProblem, mesh: Mesh, method: Method,
              cfg: ImplicitSolveConfig | None = None) -> Trajectory:
    """Run a full trajectory of ``method`` over ``mesh``.

    The initial node carries y0 exactly. Total kernel cost is O(n_steps**2)
    because the outer abscissa changes every step, invalidating any cached
    kernel values; each step therefore re-evaluates its full history row.

    If a computed node exceeds 1e300 in magnitude (or is non-finite) the
    run stops there: the returned arrays are truncated after the offending
    node and ``overflow_at`` records its index, so unstable runs terminate
    with recorded growth instead of spreading non-finite values.
    Exceptions raised inside a step gain a ``step_index`` attribute
    identifying the node being computed.
    """
    if cfg is None:
        cfg = ImplicitSolveConfig()
    w = np.empty(mesh.n_steps + 1)
    w[0] = problem.y0
    diagnostics: list[StepDiagnostics] = []
    overflow_at = None
    steps_done = mesh.n_steps
    for i in range(mesh.n_steps):
        try:
            if method == Method.EXPLICIT:
                w_next = explicit_step(problem, w, mesh, i)
                diagnostics.append(StepDiagnostics(iterations=0, last_residual=0.0))
            else:
                w_next, diag = implicit_step(problem, w, mesh, i, cfg)
                diagnostics.append(diag)
        except VidestepError as exc:
            exc.step_index = i + 1
            raise
        w[i + 1] = w_next
        if not math.isfinite(w_next) or abs(w_next) > OVERFLOW_CUTOFF:
            overflow_at = i + 1
            steps_done = i + 1
            break
    return Trajectory(
        mesh=mesh,
        w=w[: steps_done + 1].copy(),
        method=method,
        step_diagnostics=diagnostics,
        overflow_at=overflow_at,
    )
