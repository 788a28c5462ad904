"""Exception types raised across singlab."""

from typing import Optional


class SingLabError(Exception):
    """Base class for every error singlab raises on purpose."""


class DomainError(SingLabError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class UnknownLabel(DomainError):
    """A class label that the training set or init model does not know."""


class ConfigError(SingLabError, ValueError):
    """An experiment configuration that cannot be run."""


class DivergentCoefficient(SingLabError, ArithmeticError):
    """A schedule coefficient (drift, diffusion, α') is infinite at the requested time."""

    def __init__(self, name: str, t: float):
        self.name = name
        self.t = t
        super().__init__(
            f"{name} diverges at t={t:g}: alpha(t)=0 turns the reverse SDE "
            f"update into inf - inf"
        )


class SingularStep(SingLabError, ZeroDivisionError):
    """A reverse step that divides by alpha(t)=0."""

    def __init__(self, method: str, t: float, detail: Optional[str] = None):
        self.method = method
        self.t = t
        message = (
            f"method '{method}' cannot step from t={t:g}: "
            f"epsilon-prediction divides by alpha(t)=0 (division-by-zero singularity)"
        )
        if detail:
            message = f"{message}; {detail}"
        super().__init__(message)


class DegenerateDensity(SingLabError, ValueError):
    """A density requested where the law is a sum of Diracs."""


class QuadratureUnconverged(SingLabError, ArithmeticError):
    """Refinement stopped reducing the quadrature error estimate."""


class DivergenceDetected(SingLabError, RuntimeError):
    """Training loss kept growing; the learning rate is too high."""
