"""
Noise schedules.

A schedule fixes the signal coefficient alpha(t) on [0, 1] with alpha(0) = 1 and
alpha(1) = 0; sigma(t) = sqrt(1 - alpha(t)^2). Everything the forward and
reverse processes need (transition coefficients, the discrete beta-hat
sequence, the SDE drift f = d log(alpha)/dt and diffusion g^2 = -2f) is
derived here.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np

from singlab.errors import DivergentCoefficient, DomainError


class ScheduleKind(str, Enum):
    COSINE = "cosine"
    LINEAR_ALPHA_SQUARED = "linear-alpha-squared"
    TABULAR = "tabular"


@dataclass(frozen=True)
class ScheduleValues:
    """Schedule coefficients at one time. Derivative fields are None when not requested."""
    t: float
    alpha: float
    sigma: float
    alpha_prime: Optional[float] = None
    drift_f: Optional[float] = None
    diffusion_g_sq: Optional[float] = None


@dataclass(frozen=True)
class Transition:
    """Coefficients linking times s < t."""
    s: float
    t: float
    alpha_s: float
    alpha_t: float
    sigma_s: float
    sigma_t: float
    alpha_t_given_s: float
    sigma_t_given_s: float
    sigma_s_given_t: float
    beta_hat: float


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"{name}={t!r} lies outside [0, 1]")
    return t


class NoiseSchedule(ABC):
    """Base class for alpha/sigma schedules. Instances are immutable."""

    kind: ScheduleKind

    @abstractmethod
    def alpha(self, t):
        """Signal coefficient; accepts scalars or arrays."""

    @abstractmethod
    def _alpha_prime(self, t: float) -> float:
        """d alpha / dt, possibly infinite at t=1."""

    def sigma(self, t):
        a = self.alpha(t)
        return np.sqrt(np.clip(1.0 - np.square(a), 0.0, None))

    def alpha_prime(self, t: float) -> float:
        t = _check_time(t)
        value = self._alpha_prime(t)
        if not math.isfinite(value):
            raise DivergentCoefficient("alpha'", t)
        return value

    def drift(self, t: float) -> float:
        """Drift f(t) = alpha'(t) / alpha(t) of the Ornstein-Uhlenbeck form."""
        t = _check_time(t)
        a = float(self.alpha(t))
        if a <= 0.0:
            raise DivergentCoefficient("drift f", t)
        return self.alpha_prime(t) / a

    def evaluate(self, t: float, derivatives: bool = True, drift: bool = True) -> ScheduleValues:
        """
        Evaluate the schedule at t.

        Args:
            t: time in [0, 1]
            derivatives: include alpha'(t)
            drift: include f(t) and g(t)^2; raises DivergentCoefficient where alpha(t)=0

        Returns:
            ScheduleValues
        """
        t = _check_time(t)
        a = float(self.alpha(t))
        s = float(self.sigma(t))
        alpha_prime = self.alpha_prime(t) if (derivatives or drift) else None
        drift_f = g_sq = None
        if drift:
            if a <= 0.0:
                raise DivergentCoefficient("drift f", t)
            drift_f = alpha_prime / a
            g_sq = -2.0 * drift_f
        return ScheduleValues(
            t=t,
            alpha=a,
            sigma=s,
            alpha_prime=alpha_prime if derivatives else None,
            drift_f=drift_f,
            diffusion_g_sq=g_sq,
        )

    def transition(self, s: float, t: float) -> Transition:
        """Transition coefficients for 0 <= s < t <= 1 with alpha(s) > 0."""
        s = _check_time(s, "s")
        t = _check_time(t)
        if s >= t:
            raise DomainError(f"transition needs s < t, got s={s:g}, t={t:g}")
        alpha_s = float(self.alpha(s))
        if alpha_s <= 0.0:
            raise DomainError(f"alpha(s)=0 at s={s:g}; alpha_t|s is undefined")
        alpha_t = float(self.alpha(t))
        sigma_s = float(self.sigma(s))
        sigma_t = float(self.sigma(t))

        a = alpha_t / alpha_s
        beta_hat = 1.0 - a * a
        sigma_t_given_s = math.sqrt(max(beta_hat, 0.0))
        sigma_s_given_t = sigma_t_given_s * sigma_s / sigma_t
        return Transition(
            s=s,
            t=t,
            alpha_s=alpha_s,
            alpha_t=alpha_t,
            sigma_s=sigma_s,
            sigma_t=sigma_t,
            alpha_t_given_s=a,
            sigma_t_given_s=sigma_t_given_s,
            sigma_s_given_t=sigma_s_given_t,
            beta_hat=beta_hat,
        )

    def beta_hat_table(self, T: int) -> np.ndarray:
        """Discrete-chain betas for i = 1..T (the last one is 1 since alpha(1) = 0)."""
        if T < 1:
            raise DomainError(f"T must be positive, got {T}")
        return np.array([self.transition((i - 1) / T, i / T).beta_hat for i in range(1, T + 1)])


class CosineSchedule(NoiseSchedule):
    """alpha(t) = cos(pi t / 2), sigma(t) = sin(pi t / 2)."""

    kind = ScheduleKind.COSINE

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        value = np.where(t >= 1.0, 0.0, np.cos(0.5 * math.pi * t))
        return value if value.ndim else float(value)

    def sigma(self, t):
        t = np.asarray(t, dtype=float)
        value = np.where(t >= 1.0, 1.0, np.sin(0.5 * math.pi * t))
        return value if value.ndim else float(value)

    def _alpha_prime(self, t: float) -> float:
        return -0.5 * math.pi * math.sin(0.5 * math.pi * t)


class LinearAlphaSquaredSchedule(NoiseSchedule):
    """alpha(t)^2 = 1 - t, so sigma(t)^2 = t."""

    kind = ScheduleKind.LINEAR_ALPHA_SQUARED

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        value = np.sqrt(np.clip(1.0 - t, 0.0, None))
        return value if value.ndim else float(value)

    def sigma(self, t):
        t = np.asarray(t, dtype=float)
        value = np.sqrt(np.clip(t, 0.0, None))
        return value if value.ndim else float(value)

    def _alpha_prime(self, t: float) -> float:
        if t >= 1.0:
            return -math.inf
        return -0.5 / math.sqrt(1.0 - t)


class TabularSchedule(NoiseSchedule):
    """alpha interpolated linearly between knots; alpha' is the slope of the segment (right-continuous)."""

    kind = ScheduleKind.TABULAR

    def __init__(self, times: Sequence[float], alphas: Sequence[float]):
        times = np.asarray(times, dtype=float)
        alphas = np.asarray(alphas, dtype=float)
        if times.ndim != 1 or times.shape != alphas.shape or times.size < 2:
            raise DomainError("tabular schedule needs matching 1-D times and alphas with at least 2 knots")
        if times[0] != 0.0 or times[-1] != 1.0:
            raise DomainError("tabular knots must start at t=0 and end at t=1")
        if alphas[0] != 1.0 or alphas[-1] != 0.0:
            raise DomainError("tabular alphas must start at 1 and end at 0")
        if np.any(np.diff(times) <= 0.0):
            raise DomainError("tabular knot times must be strictly increasing")
        if np.any(np.diff(alphas) >= 0.0):
            raise DomainError("tabular alphas must be strictly decreasing")
        self.times = times
        self.alphas = alphas
        self.times.setflags(write=False)
        self.alphas.setflags(write=False)
        self._slopes = np.diff(alphas) / np.diff(times)

    def alpha(self, t):
        value = np.interp(np.asarray(t, dtype=float), self.times, self.alphas)
        return value if np.ndim(value) else float(value)

    def _alpha_prime(self, t: float) -> float:
        segment = int(np.searchsorted(self.times, t, side="right")) - 1
        segment = min(max(segment, 0), self._slopes.size - 1)
        return float(self._slopes[segment])


def make_schedule(kind: str = "cosine", params: Optional[Dict[str, Any]] = None) -> NoiseSchedule:
    """
    Build a schedule from its config name and parameters.

    Args:
        kind: one of 'cosine', 'linear-alpha-squared', 'tabular'
        params: kind-specific parameters; tabular takes 'times' and 'alphas'

    Returns:
        NoiseSchedule
    """
    params = dict(params or {})
    kind = ScheduleKind(kind)
    if kind is ScheduleKind.TABULAR:
        missing = {"times", "alphas"} - set(params)
        if missing:
            raise DomainError(f"tabular schedule needs parameters {sorted(missing)}")
        times, alphas = params.pop("times"), params.pop("alphas")
        if params:
            raise DomainError(f"unknown tabular parameters: {sorted(params)}")
        return TabularSchedule(times, alphas)
    if params:
        raise DomainError(f"schedule '{kind.value}' takes no parameters, got {sorted(params)}")
    if kind is ScheduleKind.COSINE:
        return CosineSchedule()
    return LinearAlphaSquaredSchedule()


def time_grid(T: int, epsilon: Optional[float] = None) -> np.ndarray:
    """
    Uniform reverse grid [1, 1-eps, ..., eps, 0].

    With the default eps = 1/T the interior spacing equals eps. The interior
    always starts at 1-eps and ends at eps, so T=2 with an explicit eps gets
    both margins.
    """
    if T < 2:
        raise DomainError(f"T must be at least 2, got {T}")
    epsilon = 1.0 / T if epsilon is None else float(epsilon)
    if not (0.0 < epsilon < 0.5):
        raise DomainError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    interior = np.linspace(1.0 - epsilon, epsilon, max(T - 1, 2))
    return np.concatenate([[1.0], interior, [0.0]])
