"""
L1 gaps between exact densities and their Gaussian surrogates.

The exact reverse transition p(x_s | x_t) is a Gaussian mixture; the surrogate
shares its covariance but puts the mean through ybar. Sweeps shrink the
controlling scale (sigma_s|t, alpha_s or alpha_t) and report gap/sqrt(scale).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import logsumexp
from tqdm import tqdm

from singlab.errors import DomainError, QuadratureUnconverged
from singlab.mixture import Label, MixtureModel, lemma_constants
from singlab.schedule import _check_time

from .reports import BoundReport, BoundRow

logger = logging.getLogger(__name__)


class QuadConfig(BaseModel):
    """Integration settings for L1 gaps."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    intervals: int = Field(default=512, ge=4, description="Initial Simpson intervals (d=1)")
    max_levels: int = Field(default=12, ge=1, description="Interval doublings before giving up")
    rtol: float = Field(default=1e-6, gt=0.0, description="Relative error target")
    atol: float = Field(default=1e-13, ge=0.0, description="Absolute error target")
    width: float = Field(default=10.0, gt=0.0, description="Half-width of the range in standard deviations")
    mc_samples: int = Field(default=200_000, ge=100, description="Monte Carlo draws (d >= 2)")
    seed: int = Field(default=0, ge=0, description="Monte Carlo seed")


class SweepSpec(BaseModel):
    """One error-bound sweep."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    which: Literal["prop1", "prop2", "terminal_marginal"]
    s: Optional[float] = Field(default=None, description="Fixed earlier time (prop1)")
    t: float = Field(default=1.0, description="Fixed later time (prop2)")
    values: List[float] = Field(
        description="Swept times: t for prop1 and terminal_marginal, s for prop2"
    )
    probes: List[float] = Field(
        default_factory=lambda: [0.0],
        description="x_t probes; a scalar p means p in every coordinate"
    )
    error_ceiling: float = Field(
        default=0.1,
        gt=0.0,
        description="Rows with error >= ceiling * gap are flagged and left out of the fitted C"
    )
    min_decrease: float = Field(
        default=5.0,
        ge=1.0,
        description="Gap at the far end over gap at the near end needed to pass"
    )

    @model_validator(mode="after")
    def _check_regime(self):
        if self.which == "prop1" and self.s is None:
            raise ValueError("prop1 sweeps need a fixed s")
        if not self.values:
            raise ValueError("a sweep needs at least one value")
        return self


@dataclass(frozen=True)
class GapEstimate:
    value: float
    error: float
    method: str
    evaluations: int


@dataclass(frozen=True)
class LemmaThresholds:
    s: float
    M: float
    tau1: float
    tau2: float
    nu1: float
    nu2: float


def _abs_diff(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """|p - q| from log densities without overflow."""
    hi = np.maximum(log_p, log_q)
    lo = np.minimum(log_p, log_q)
    with np.errstate(invalid="ignore"):
        out = np.exp(hi) * -np.expm1(lo - hi)
    return np.where(np.isneginf(hi), 0.0, out)


def _gauss_logpdf(sq: np.ndarray, d: int, var: float) -> np.ndarray:
    return -0.5 * sq / var - 0.5 * d * math.log(2.0 * math.pi * var)


def _simpson_until_converged(f, lo: float, hi: float, quad: QuadConfig) -> GapEstimate:
    n = quad.intervals + quad.intervals % 2
    prev = simpson(f(np.linspace(lo, hi, n + 1)), x=np.linspace(lo, hi, n + 1))
    evaluations = n + 1
    errors: List[float] = []
    for level in range(quad.max_levels):
        n *= 2
        xs = np.linspace(lo, hi, n + 1)
        cur = float(simpson(f(xs), x=xs))
        evaluations += n + 1
        err = abs(cur - prev) / 15.0
        if err <= max(quad.rtol * abs(cur), quad.atol):
            return GapEstimate(value=cur, error=err, method="simpson", evaluations=evaluations)
        # the |p - q| kinks make single doublings erratic; judge over two
        if len(errors) >= 2 and err > 0.5 * errors[-2]:
            raise QuadratureUnconverged(
                f"Simpson error stalled at {err:.3g} after {n} intervals (two levels earlier {errors[-2]:.3g})"
            )
        errors.append(err)
        prev = cur
    raise QuadratureUnconverged(f"Simpson error {errors[-1]:.3g} above target after {n} intervals")


def l1_gap(
    model: MixtureModel,
    x_t,
    s: float,
    t: float,
    quad: Optional[QuadConfig] = None,
    label: Label = None,
    rng: Optional[np.random.Generator] = None,
) -> GapEstimate:
    """
    Integral of |p(x_s | x_t) - p~(x_s | x_t)| over x_s.

    Args:
        model: mixture model
        x_t: state at time t
        s: earlier time, 0 < s < t
        t: later time
        quad: integration settings
        label: restrict the data distribution to one class
        rng: Monte Carlo generator for d >= 2 (default seeded from quad.seed)

    Returns:
        GapEstimate with a Richardson (d=1) or standard-error (d>=2) estimate
    """
    quad = quad or QuadConfig()
    s = _check_time(s, "s")
    if s <= 0.0:
        raise DomainError("l1_gap needs s > 0")
    tr = model.schedule.transition(s, t)
    d = model.training_set.d
    pts = model.training_set.points[model.training_set.select(label)]
    x_t = np.asarray(x_t, dtype=float).reshape(d)

    with np.errstate(divide="ignore"):
        log_w = np.log(model.posterior_weights(x_t, t, label))
    coef_x = tr.alpha_t_given_s * tr.sigma_s ** 2 / tr.sigma_t ** 2
    coef_y = tr.alpha_s * tr.sigma_t_given_s ** 2 / tr.sigma_t ** 2
    means = coef_x * x_t[None, :] + coef_y * pts
    mean_q = coef_x * x_t + coef_y * model.ybar(x_t, t, label)
    var = tr.sigma_s_given_t ** 2

    def log_p(xs):
        diff = xs[:, None, :] - means[None, :, :]
        sq = np.einsum("bnd,bnd->bn", diff, diff)
        return logsumexp(log_w[None, :] + _gauss_logpdf(sq, d, var), axis=1)

    def log_q(xs):
        diff = xs - mean_q
        return _gauss_logpdf(np.einsum("bd,bd->b", diff, diff), d, var)

    if d == 1:
        sd = math.sqrt(var)
        centers = np.append(means[:, 0], mean_q[0])
        lo = float(centers.min()) - quad.width * sd
        hi = float(centers.max()) + quad.width * sd

        def integrand(grid):
            xs = grid[:, None]
            return _abs_diff(log_p(xs), log_q(xs))

        return _simpson_until_converged(integrand, lo, hi, quad)

    rng = rng if rng is not None else np.random.default_rng(quad.seed)
    xs = mean_q + math.sqrt(var) * rng.standard_normal((quad.mc_samples, d))
    ratio = np.abs(np.expm1(np.minimum(log_p(xs) - log_q(xs), 700.0)))
    return GapEstimate(
        value=float(ratio.mean()),
        error=float(ratio.std(ddof=1) / math.sqrt(quad.mc_samples)),
        method="monte-carlo",
        evaluations=quad.mc_samples,
    )


def terminal_marginal_gap(
    model: MixtureModel,
    t: float,
    quad: Optional[QuadConfig] = None,
    label: Label = None,
    rng: Optional[np.random.Generator] = None,
) -> GapEstimate:
    """Integral of |p(x, t) - N(x; alpha_t ybar(x, t), sigma_t^2 I)| over x."""
    quad = quad or QuadConfig()
    t = _check_time(t)
    alpha = float(model.schedule.alpha(t))
    sigma = float(model.schedule.sigma(t))
    if sigma == 0.0:
        raise DomainError("terminal gap needs t > 0")
    d = model.training_set.d
    pts = model.training_set.points[model.training_set.select(label)]

    def log_p(xs):
        return model.log_density("marginal", xs, t, label=label)

    def log_q(xs):
        diff = xs - alpha * model.ybar(xs, t, label)
        return _gauss_logpdf(np.einsum("bd,bd->b", diff, diff), d, sigma * sigma)

    if d == 1:
        lo = alpha * float(pts.min()) - quad.width * sigma
        hi = alpha * float(pts.max()) + quad.width * sigma

        def integrand(grid):
            xs = grid[:, None]
            return _abs_diff(log_p(xs), log_q(xs))

        return _simpson_until_converged(integrand, lo, hi, quad)

    rng = rng if rng is not None else np.random.default_rng(quad.seed)
    picks = rng.integers(pts.shape[0], size=quad.mc_samples)
    xs = alpha * pts[picks] + sigma * rng.standard_normal((quad.mc_samples, d))
    ratio = np.abs(np.expm1(np.minimum(log_q(xs) - log_p(xs), 700.0)))
    return GapEstimate(
        value=float(ratio.mean()),
        error=float(ratio.std(ddof=1) / math.sqrt(quad.mc_samples)),
        method="monte-carlo",
        evaluations=quad.mc_samples,
    )


def _row(model, spec: SweepSpec, quad: QuadConfig, label: Label, task) -> BoundRow:
    value, probe = task
    d = model.training_set.d
    if spec.which == "terminal_marginal":
        est = terminal_marginal_gap(model, value, quad, label)
        scale = float(model.schedule.alpha(value))
        s, t, sigma_st, alpha_s = None, value, None, None
        probe = None
    else:
        s, t = (spec.s, value) if spec.which == "prop1" else (value, spec.t)
        est = l1_gap(model, np.full(d, probe), s, t, quad, label)
        tr = model.schedule.transition(s, t)
        sigma_st, alpha_s = tr.sigma_s_given_t, tr.alpha_s
        scale = sigma_st if spec.which == "prop1" else alpha_s

    return BoundRow(
        s=s,
        t=t,
        probe=probe,
        gap=est.value,
        error=est.error,
        sigma_s_given_t=sigma_st,
        alpha_s=alpha_s,
        scale=scale,
        ratio=est.value / math.sqrt(scale) if scale > 0 else math.inf,
        ratio_two_thirds=est.value / scale ** (2.0 / 3.0) if scale > 0 else math.inf,
        flagged=not (est.error < spec.error_ceiling * est.value),
    )


def bound_sweep(
    model: MixtureModel,
    spec: SweepSpec,
    quad: Optional[QuadConfig] = None,
    label: Label = None,
    threads: Optional[int] = None,
    progress: bool = False,
) -> BoundReport:
    """
    Evaluate the L1 gap over a sweep grid.

    prop1 fixes s and sweeps t down toward s; prop2 fixes t (default 1) and
    sweeps s up toward 1; terminal_marginal sweeps t toward 1 on the marginal.

    Returns:
        BoundReport with per-row ratios, the fitted C and trend diagnostics
    """
    quad = quad or QuadConfig()
    probes = [None] if spec.which == "terminal_marginal" else spec.probes
    tasks = [(value, probe) for probe in probes for value in spec.values]

    with ThreadPoolExecutor(max_workers=max(1, threads or 1)) as pool:
        rows = list(tqdm(
            pool.map(lambda task: _row(model, spec, quad, label, task), tasks),
            total=len(tasks),
            desc=f"{spec.which} sweep",
            unit="row",
            disable=not progress,
        ))

    report = BoundReport(
        which=spec.which, rows=rows, error_ceiling=spec.error_ceiling, min_decrease=spec.min_decrease,
    )
    flagged = len(rows) - len(report.retained)
    if flagged:
        logger.warning("%s sweep: %d of %d rows flagged for quadrature error", spec.which, flagged, len(rows))
    return report


def lemma_thresholds(model: MixtureModel, s: float) -> LemmaThresholds:
    """
    Explicit thresholds of the regimes where the gap bounds apply.

    tau1: sigma_s|tau1 = min((sigma_s^2 / (alpha_s M))^(2/3), 0.9 sigma_s);
    tau2: the same with 2M; nu1: alpha(nu1) = min((1/M)^(2/3), 0.9);
    nu2: the same with 2M.
    """
    s = _check_time(s, "s")
    sched = model.schedule
    alpha_s = float(sched.alpha(s))
    sigma_s = float(sched.sigma(s))
    if not (alpha_s > 0.0 and sigma_s > 0.0):
        raise DomainError(f"thresholds need 0 < s < 1 with alpha_s, sigma_s > 0; got s={s:g}")
    M = lemma_constants(model.training_set).M

    def sigma_target(m: float) -> float:
        if m == 0.0:
            return 0.9 * sigma_s
        return min((sigma_s ** 2 / (alpha_s * m)) ** (2.0 / 3.0), 0.9 * sigma_s)

    def alpha_target(m: float) -> float:
        if m == 0.0:
            return 0.9
        return min((1.0 / m) ** (2.0 / 3.0), 0.9)

    lo = s + 1e-12 * max(1.0, s)

    def tau(target: float) -> float:
        return brentq(lambda t: sched.transition(s, t).sigma_s_given_t - target, lo, 1.0, xtol=1e-14)

    def nu(target: float) -> float:
        return brentq(lambda t: float(sched.alpha(t)) - target, 0.0, 1.0, xtol=1e-14)

    return LemmaThresholds(
        s=s,
        M=M,
        tau1=tau(sigma_target(M)),
        tau2=tau(sigma_target(2.0 * M)),
        nu1=nu(alpha_target(M)),
        nu2=nu(alpha_target(2.0 * M)),
    )
