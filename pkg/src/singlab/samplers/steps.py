"""
Reverse step rules.

Every rule maps a (B, d) batch at time t to time s < t. ybar-based rules
(ddpm, ddim, ddim_first_order, ode_*) stay finite at t=1; ddpm_eps divides by
alpha(t) and sde_em needs the drift f(t), so both refuse the t=1 step.
"""

import math
from typing import Optional

import numpy as np

from singlab.errors import DomainError, SingularStep
from singlab.guidance import Denoiser
from singlab.schedule import _check_time

from .base import ReverseStep, SamplerMethod, get_step, register


def _require_noise(method, z, x):
    if z is None:
        raise DomainError(f"method '{method.value}' needs standard normal draws")
    return np.asarray(z, dtype=float).reshape(x.shape)


@register
class DDPMStep(ReverseStep):
    """Gaussian reverse transition with mean through ybar."""

    name = SamplerMethod.DDPM
    stochastic = True

    def step(self, denoiser, x, t, s, z=None):
        tr = denoiser.model.schedule.transition(s, t)
        coef_x = tr.alpha_t_given_s * tr.sigma_s ** 2 / tr.sigma_t ** 2
        coef_y = tr.alpha_s * tr.sigma_t_given_s ** 2 / tr.sigma_t ** 2
        mean = coef_x * x + coef_y * denoiser.ybar(x, t)
        return mean + tr.sigma_s_given_t * _require_noise(self.name, z, x)


@register
class DDPMEpsStep(ReverseStep):
    """Same transition written through the noise prediction."""

    name = SamplerMethod.DDPM_EPS
    stochastic = True

    def step(self, denoiser, x, t, s, z=None):
        if float(denoiser.model.schedule.alpha(t)) <= 0.0:
            raise SingularStep(self.name.value, t)
        tr = denoiser.model.schedule.transition(s, t)
        mean = (x - (tr.sigma_t_given_s ** 2 / tr.sigma_t) * denoiser.eps(x, t)) / tr.alpha_t_given_s
        return mean + tr.sigma_s_given_t * _require_noise(self.name, z, x)


@register
class DDIMStep(ReverseStep):
    name = SamplerMethod.DDIM

    def step(self, denoiser, x, t, s, z=None):
        sched = denoiser.model.schedule
        if s >= t:
            raise DomainError(f"reverse step needs s < t, got s={s:g}, t={t:g}")
        alpha_s = float(sched.alpha(_check_time(s, "s")))
        sigma_s = float(sched.sigma(s))
        alpha_t = float(sched.alpha(_check_time(t)))
        ratio = sigma_s / float(sched.sigma(t))
        return (alpha_s - ratio * alpha_t) * denoiser.ybar(x, t) + ratio * x


@register
class DDIMFirstOrderStep(ReverseStep):
    """Euler step of the probability flow with alpha' replaced by a difference quotient."""

    name = SamplerMethod.DDIM_FIRST_ORDER

    def step(self, denoiser, x, t, s, z=None):
        sched = denoiser.model.schedule
        if s >= t:
            raise DomainError(f"reverse step needs s < t, got s={s:g}, t={t:g}")
        alpha_s = float(sched.alpha(_check_time(s, "s")))
        alpha_t = float(sched.alpha(_check_time(t)))
        var_t = float(sched.sigma(t)) ** 2
        return ((alpha_s - alpha_t) / var_t) * denoiser.ybar(x, t) + ((1.0 - alpha_s * alpha_t) / var_t) * x


@register
class SDEEulerMaruyamaStep(ReverseStep):
    """Euler-Maruyama step of the reverse SDE."""

    name = SamplerMethod.SDE_EM
    stochastic = True

    def step(self, denoiser, x, t, s, z=None):
        if s >= t:
            raise DomainError(f"reverse step needs s < t, got s={s:g}, t={t:g}")
        _check_time(s, "s")
        values = denoiser.model.schedule.evaluate(t)
        h = t - s
        drift = values.drift_f * x - values.diffusion_g_sq * denoiser.score(x, t)
        return x - drift * h + math.sqrt(values.diffusion_g_sq * h) * _require_noise(self.name, z, x)


def ode_rhs(denoiser: Denoiser, x, t: float) -> np.ndarray:
    """Probability-flow velocity -(alpha alpha'/sigma^2) x + (alpha'/sigma^2) ybar; finite at t=1."""
    sched = denoiser.model.schedule
    var = float(sched.sigma(t)) ** 2
    if var == 0.0:
        raise DomainError("probability-flow velocity is undefined at t=0")
    alpha = float(sched.alpha(t))
    alpha_prime = sched.alpha_prime(t)
    return (-alpha * alpha_prime / var) * x + (alpha_prime / var) * denoiser.ybar(x, t)


class _ODEStep(ReverseStep):
    def _check(self, t, s):
        _check_time(t)
        _check_time(s, "s")
        if s >= t:
            raise DomainError(f"reverse step needs s < t, got s={s:g}, t={t:g}")
        if s <= 0.0:
            raise DomainError(f"'{self.name.value}' cannot land on t=0; use the ybar collapse")


@register
class ODEEulerStep(_ODEStep):
    name = SamplerMethod.ODE_EULER

    def step(self, denoiser, x, t, s, z=None):
        self._check(t, s)
        return x - (t - s) * ode_rhs(denoiser, x, t)


@register
class ODERK4Step(_ODEStep):
    name = SamplerMethod.ODE_RK4

    def step(self, denoiser, x, t, s, z=None):
        self._check(t, s)
        h = s - t
        mid = t + 0.5 * h
        k1 = ode_rhs(denoiser, x, t)
        k2 = ode_rhs(denoiser, x + 0.5 * h * k1, mid)
        k3 = ode_rhs(denoiser, x + 0.5 * h * k2, mid)
        k4 = ode_rhs(denoiser, x + h * k3, s)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def reverse_step(
    model,
    method,
    x_t,
    t: float,
    s: float,
    label=None,
    guidance=None,
    rng: Optional[np.random.Generator] = None,
    z=None,
) -> np.ndarray:
    """
    One reverse transition for a single state or a batch.

    Stochastic methods take their standard normal draws from `z` when given,
    otherwise from `rng`.

    Returns:
        state(s) at time s, shaped like x_t
    """
    rule = get_step(method)
    denoiser = Denoiser(model, label, guidance)
    batch, single = model._as_batch(x_t)
    if rule.stochastic and z is None:
        if rng is None:
            raise DomainError(f"method '{rule.name.value}' needs an rng or explicit draws")
        z = rng.standard_normal(batch.shape)
    out = rule.step(denoiser, batch, float(t), float(s), z)
    if single:
        return out[0]
    return out.reshape(np.shape(x_t)) if np.ndim(x_t) == 1 else out
