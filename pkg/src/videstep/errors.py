"""Exception and warning types raised by the solvers and analysis routines."""

from __future__ import annotations

__all__ = [
    "VidestepError",
    "NonPositiveStep",
    "NonTilingStep",
    "IndexOutOfRange",
    "StepEvaluationError",
    "NoConvergence",
    "SingularJacobian",
    "SingularDenominator",
    "DegenerateDenominator",
    "MissingExact",
    "MissingJacobian",
    "LengthMismatch",
    "ZeroError",
    "UnknownProblem",
    "ConfigurationWarning",
]


class VidestepError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveStep(VidestepError):
    """Step size h must be strictly positive."""


class NonTilingStep(VidestepError):
    """Step size does not tile the interval [x0, xf] into whole steps."""


class IndexOutOfRange(VidestepError):
    """Node index outside 0..n for this mesh."""


class StepEvaluationError(VidestepError):
    """A user-supplied callback (f, K, or a jacobian) failed or returned non-finite."""


class NoConvergence(VidestepError):
    """Newton or fixed-point iteration hit the iteration cap without meeting tolerance."""

    def __init__(self, iterations: int, last_residual: float):
        self.iterations = iterations
        self.last_residual = last_residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(last residual {last_residual:.3e})"
        )


class SingularJacobian(VidestepError):
    """Newton update denominator is numerically zero."""


class SingularDenominator(VidestepError):
    """Propagation denominator D_{i+1} is numerically zero."""


class DegenerateDenominator(VidestepError):
    """Bound estimation denominator is too small to divide by."""


class MissingExact(VidestepError):
    """The requested operation needs an exact solution the problem does not carry."""


class MissingJacobian(VidestepError):
    """The requested operation needs f_y and K_y jacobians the problem does not carry."""


class LengthMismatch(VidestepError):
    """Array arguments that must agree in length do not."""


class ZeroError(VidestepError):
    """An error magnitude is too close to zero for a meaningful ratio."""


class UnknownProblem(VidestepError):
    """No built-in problem registered under the requested id."""


class ConfigurationWarning(UserWarning):
    """A parameter combination is outside the regime where a guarantee holds."""
