"""
Statistical and identity checks on the closed-form model and its samplers.

Every check returns a StatReport whose rows carry the statistic, the threshold
it was judged against and the verdict; rows with passed=None are informational.
"""

import logging
import math
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import kstest, kstwo, norm

from singlab.errors import DomainError
from singlab.mixture import Label, MixtureModel
from singlab.samplers import (
    FinalMode,
    InitMode,
    SamplerConfig,
    SamplerMethod,
    initial_step,
    run_chain,
)

from .energy import energy_distance
from .reports import CheckResult, StatReport

logger = logging.getLogger(__name__)

ConsistencyKind = Literal["bayes", "marginal", "reverse_from_one", "terminal_gaussian", "terminal_conditional"]


class Prop3Spec(BaseModel):
    """Implied initial prediction under naive and singular-step initialization."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(default=0.05, gt=0.0, lt=0.5, description="Time margin")
    n: int = Field(default=100_000, ge=10, description="Draws per mode")
    mean_tol: float = Field(default=0.02, gt=0.0, description="Bound on |mean| per dimension")
    var_tol: float = Field(default=0.02, gt=0.0, description="Bound on |variance - 1| per dimension")
    ks_level: float = Field(default=0.01, gt=0.0, lt=1.0, description="KS significance level")
    min_alpha: float = Field(
        default=1e-3,
        gt=0.0,
        description="alpha(1-eps) below this marks the inversion ill-conditioned"
    )
    label: Optional[int] = Field(default=None, description="Class for the singular-step ensemble")


class ConsistencySpec(BaseModel):
    """Grids and sample sizes of the identity checks."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    checks: List[ConsistencyKind] = Field(
        default_factory=lambda: ["bayes", "marginal", "reverse_from_one", "terminal_gaussian", "terminal_conditional"],
        description="Checks to run"
    )
    tuples: int = Field(default=10_000, ge=1, description="Random (s, t, x_s, x_t) tuples")
    bayes_tol: float = Field(default=1e-10, gt=0.0)
    marginal_times: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    marginal_samples: int = Field(default=10_000, ge=10)
    marginal_via: Literal["forward", "reverse"] = Field(
        default="forward",
        description="forward: direct draws; reverse: ddpm chains started from the true marginal"
    )
    reverse_T: int = Field(default=1000, ge=3, description="Grid size of the reverse marginal check")
    ks_level: float = Field(default=0.01, gt=0.0, lt=1.0)
    reverse_s: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    x1_probes: List[float] = Field(default_factory=lambda: [-2.0, 0.0, 2.0])
    reverse_tol: float = Field(default=1e-12, gt=0.0)
    terminal_times: List[float] = Field(default_factory=lambda: [0.9, 0.99, 0.999])
    conditional_s: float = Field(default=0.5, gt=0.0, lt=1.0)
    conditional_probe: float = Field(default=0.5)
    grid_points: int = Field(default=1001, ge=3, description="Grid size (d=1) or random points (d>=2)")
    grid_width: float = Field(default=5.0, gt=0.0)


class LipschitzSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    t_values: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02])
    grid_lo: float = -2.0
    grid_hi: float = 2.0
    grid_points: int = Field(default=401, ge=1)
    h_rel: float = Field(default=1e-3, gt=0.0, description="Finite-difference step as a fraction of sigma_t^2")
    jacobian_tol: float = Field(default=1e-4, gt=0.0, description="Relative finite-difference vs analytic bound")


class BrightnessSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(default=0.05, gt=0.0, lt=0.5)
    n: int = Field(default=100_000, ge=10, description="States per initial ensemble")
    modes: List[InitMode] = Field(
        default_factory=lambda: [InitMode.NAIVE_GAUSSIAN, InitMode.SING_STEP, InitMode.TRUE_FORWARD]
    )
    energy_points: int = Field(default=10_000, ge=10, description="Ensemble rows used for energy distances")
    mean_tol: float = Field(default=0.01, gt=0.0, description="Bound on |brightness| for naive init")
    rel_tol: float = Field(default=0.01, gt=0.0, description="Relative brightness tolerance for informed init")
    energy_factor: float = Field(default=10.0, gt=0.0)
    hit_chains: int = Field(default=2000, ge=0, description="Chains sampled to x0 per mode and class")
    T: int = Field(default=200, ge=3)
    method: SamplerMethod = SamplerMethod.DDPM


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *keys])))


def prop3_check(
    model: MixtureModel,
    epsilon: Optional[float] = None,
    n: Optional[int] = None,
    seed: int = 0,
    spec: Optional[Prop3Spec] = None,
    init_model=None,
) -> StatReport:
    """
    Invert the singular step: ybar_hat = (x_{1-eps} - sigma x1) / alpha.

    Naive init draws x_{1-eps} ~ N(0, I) and pairs it with
    x1 = sigma x_{1-eps} + alpha xi, the noise a singular step would have used;
    the implied ybar_hat is then standard normal. Singular-step init gives back
    the class mean exactly.
    """
    spec = spec or Prop3Spec()
    updates = {k: v for k, v in (("epsilon", epsilon), ("n", n)) if v is not None}
    spec = spec.model_copy(update=updates)
    d = model.training_set.d
    start = 1.0 - spec.epsilon
    alpha = float(model.schedule.alpha(start))
    sigma = float(model.schedule.sigma(start))
    report = StatReport(name="prop3")

    ill = alpha < spec.min_alpha
    report.add(CheckResult(
        name="conditioning.alpha",
        sample_size=1,
        statistic=alpha,
        threshold=spec.min_alpha,
        passed=None,
        details={"ill_conditioned": ill},
    ))
    if ill:
        logger.warning("alpha(1-eps)=%.3g below %.3g: inverting the singular step is ill-conditioned", alpha, spec.min_alpha)
    if alpha == 0.0:
        return report

    rng = _rng(seed, 0)
    x = rng.standard_normal((spec.n, d))
    xi = rng.standard_normal((spec.n, d))
    x1 = sigma * x + alpha * xi
    implied = (x - sigma * x1) / alpha

    means = implied.mean(axis=0)
    variances = implied.var(axis=0, ddof=1)
    for j in range(d):
        report.add(CheckResult(
            name=f"naive.mean[{j}]", sample_size=spec.n, statistic=abs(float(means[j])),
            threshold=spec.mean_tol, passed=bool(abs(means[j]) < spec.mean_tol),
            details={"mean": float(means[j])},
        ))
        report.add(CheckResult(
            name=f"naive.variance[{j}]", sample_size=spec.n, statistic=abs(float(variances[j]) - 1.0),
            threshold=spec.var_tol, passed=bool(abs(variances[j] - 1.0) < spec.var_tol),
            details={"variance": float(variances[j])},
        ))
    pooled = implied.ravel()
    ks = kstest(pooled, norm.cdf)
    critical = float(kstwo.ppf(1.0 - spec.ks_level, pooled.size))
    report.add(CheckResult(
        name="naive.ks", sample_size=pooled.size, statistic=float(ks.statistic),
        threshold=critical, passed=bool(ks.statistic < critical), details={"pvalue": float(ks.pvalue)},
    ))

    state = initial_step(
        model, InitMode.SING_STEP, spec.label, init_model, spec.epsilon, rng=_rng(seed, 1), size=spec.n,
    )
    implied = (state.x_one_minus_eps - sigma * state.x1) / alpha
    if init_model is not None:
        from singlab.init_trainer import predict_init

        target = predict_init(init_model, spec.label)
    else:
        target = model.training_set.class_mean(spec.label)
    deviation = float(np.abs(implied - target).max())
    scale = 1.0 + float(np.abs(target).max()) + sigma * float(np.abs(state.x1).max()) / alpha
    tolerance = 1e-12 * scale
    report.add(CheckResult(
        name="sing_step.max_deviation", sample_size=spec.n, statistic=deviation,
        threshold=tolerance, passed=bool(deviation <= tolerance),
        details={"variance": implied.var(axis=0).tolist(), "target": target.tolist()},
    ))
    return report


def _grid(model: MixtureModel, spec: ConsistencySpec, rng: np.random.Generator) -> np.ndarray:
    d = model.training_set.d
    if d == 1:
        return np.linspace(-spec.grid_width, spec.grid_width, spec.grid_points)[:, None]
    return rng.standard_normal((spec.grid_points, d))


def _bayes(model: MixtureModel, spec: ConsistencySpec, seed: int, label: Label) -> CheckResult:
    rng = _rng(seed, 10)
    pts = model.training_set.points[model.training_set.select(label)]
    worst = 0.0
    for _ in range(spec.tuples):
        s = rng.uniform(0.05, 0.9)
        t = s + rng.uniform(0.01, 1.0) * (0.99 - s)
        tr = model.schedule.transition(s, t)
        y = pts[rng.integers(pts.shape[0])]
        x_s = tr.alpha_s * y + tr.sigma_s * rng.standard_normal(y.shape)
        x_t = tr.alpha_t_given_s * x_s + tr.sigma_t_given_s * rng.standard_normal(y.shape)
        lhs = model.log_density("reverse_exact", x_t, t, x_s=x_s, s=s, label=label)
        rhs = (
            model.log_density("forward_cond", x_t, t, x_s=x_s, s=s, label=label)
            + model.log_density("marginal", x_s, s, label=label)
            - model.log_density("marginal", x_t, t, label=label)
        )
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return CheckResult(
        name="bayes.residual", sample_size=spec.tuples, statistic=worst,
        threshold=spec.bayes_tol, passed=worst < spec.bayes_tol,
    )


def _mixture_cdf(model: MixtureModel, t: float, label: Label):
    """CDF of the first coordinate of p(x, t)."""
    alpha = float(model.schedule.alpha(t))
    sigma = float(model.schedule.sigma(t))
    centers = alpha * model.training_set.points[model.training_set.select(label), 0]

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return norm.cdf((x[..., None] - centers) / sigma).mean(axis=-1)

    return cdf


def _marginal(model, spec: ConsistencySpec, seed: int, label: Label, threads, progress) -> List[CheckResult]:
    n = spec.marginal_samples
    critical = float(kstwo.ppf(1.0 - spec.ks_level, n))
    samples = {}
    if spec.marginal_via == "forward":
        pts = model.training_set.points[model.training_set.select(label)]
        for i, t in enumerate(spec.marginal_times):
            rng = _rng(seed, 20, i)
            alpha, sigma = float(model.schedule.alpha(t)), float(model.schedule.sigma(t))
            y = pts[rng.integers(pts.shape[0], size=n), 0]
            samples[t] = alpha * y + sigma * rng.standard_normal(n)
    else:
        T = spec.reverse_T
        config = SamplerConfig(
            method=SamplerMethod.DDPM, T=T, init_mode=InitMode.TRUE_FORWARD,
            final_mode=FinalMode.PLAIN_LAST_STEP, seed=seed, chains=n, record_every=1,
        )
        batch = run_chain(model, config, label=label, threads=threads, progress=progress)
        for t in spec.marginal_times:
            index = int(np.argmin(np.abs(batch.times - t)))
            samples[float(batch.times[index])] = batch.states[:, index, 0]

    results = []
    for t, x in samples.items():
        ks = kstest(x, _mixture_cdf(model, t, label))
        results.append(CheckResult(
            name=f"marginal.ks[t={t:.4g}]", sample_size=n, statistic=float(ks.statistic),
            threshold=critical, passed=bool(ks.statistic < critical),
            details={"pvalue": float(ks.pvalue), "via": spec.marginal_via},
        ))
    return results


def _reverse_from_one(model, spec: ConsistencySpec, seed: int, label: Label) -> CheckResult:
    d = model.training_set.d
    grid = _grid(model, spec, _rng(seed, 30))
    worst = 0.0
    for s in spec.reverse_s:
        marginal = model.log_density("marginal", grid, s, label=label)
        for probe in spec.x1_probes:
            x1 = np.full(d, probe)
            conditional = model.log_density("reverse_exact", x1, 1.0, x_s=grid, s=s, label=label)
            worst = max(worst, float(np.abs(conditional - marginal).max()))
    return CheckResult(
        name="reverse_from_one.residual",
        sample_size=grid.shape[0] * len(spec.reverse_s) * len(spec.x1_probes),
        statistic=worst, threshold=spec.reverse_tol, passed=worst < spec.reverse_tol,
    )


def _sup_gaps(values: Sequence[float], name: str, n: int) -> List[CheckResult]:
    rows = [
        CheckResult(name=f"{name}.sup_gap[{i}]", sample_size=n, statistic=float(v))
        for i, v in enumerate(values)
    ]
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    rows.append(CheckResult(
        name=f"{name}.decreasing", sample_size=n,
        statistic=float(values[-1] / values[0]) if values[0] > 0 else 0.0,
        threshold=1.0, passed=decreasing,
    ))
    return rows


def _terminal(model, spec: ConsistencySpec, seed: int, label: Label, conditional: bool) -> List[CheckResult]:
    d = model.training_set.d
    grid = _grid(model, spec, _rng(seed, 40))
    std_normal = np.exp(-0.5 * np.einsum("bd,bd->b", grid, grid) - 0.5 * d * math.log(2.0 * math.pi))
    times = sorted(spec.terminal_times)
    gaps = []
    for t in times:
        if conditional:
            if t <= spec.conditional_s:
                raise DomainError(f"terminal time {t} must exceed conditional_s={spec.conditional_s}")
            x_s = np.full(d, spec.conditional_probe)
            logp = model.log_density(
                "forward_cond", grid, t, x_s=np.broadcast_to(x_s, grid.shape), s=spec.conditional_s,
            )
        else:
            logp = model.log_density("marginal", grid, t, label=label)
        gaps.append(float(np.abs(np.exp(logp) - std_normal).max()))
    name = "terminal_conditional" if conditional else "terminal_gaussian"
    rows = _sup_gaps(gaps, name, grid.shape[0])
    for row, t in zip(rows, times):
        row.details["t"] = t
    return rows


def consistency_checks(
    model: MixtureModel,
    which: Optional[Sequence[str]] = None,
    spec: Optional[ConsistencySpec] = None,
    seed: int = 0,
    label: Label = None,
    threads: Optional[int] = None,
    progress: bool = False,
) -> StatReport:
    """
    Identity checks of the closed forms.

    bayes: reverse_exact = forward_cond + marginal(s) - marginal(t) in logs;
    marginal: KS of simulated x_t against the mixture CDF (first coordinate);
    reverse_from_one: p(x_s | x_1) equals p(x_s, s) for any x_1;
    terminal_gaussian / terminal_conditional: sup-gap to N(0, I) shrinking as t -> 1.
    """
    spec = spec or ConsistencySpec()
    kinds = list(which) if which is not None else list(spec.checks)
    report = StatReport(name="consistency")
    for kind in kinds:
        logger.debug("consistency check %s", kind)
        if kind == "bayes":
            report.add(_bayes(model, spec, seed, label))
        elif kind == "marginal":
            for row in _marginal(model, spec, seed, label, threads, progress):
                report.add(row)
        elif kind == "reverse_from_one":
            report.add(_reverse_from_one(model, spec, seed, label))
        elif kind in ("terminal_gaussian", "terminal_conditional"):
            for row in _terminal(model, spec, seed, label, kind == "terminal_conditional"):
                report.add(row)
        else:
            raise DomainError(f"unknown consistency check '{kind}'")
    return report


def finite_difference_jacobian(model: MixtureModel, x: np.ndarray, t: float, h: float, label: Label) -> np.ndarray:
    """Central-difference Jacobian of the score, shape (G, d, d)."""
    G, d = x.shape
    jac = np.empty((G, d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        plus = model.score_and_eps(x + step, t, label).score
        minus = model.score_and_eps(x - step, t, label).score
        jac[:, :, j] = (plus - minus) / (2.0 * h)
    return jac


def lipschitz_probe(
    model: MixtureModel,
    t_list: Optional[Sequence[float]] = None,
    x_grid=None,
    spec: Optional[LipschitzSpec] = None,
    label: Label = None,
) -> StatReport:
    """
    Largest score derivative over a grid, for t shrinking toward 0.

    The derivative is the spectral norm of the finite-difference Jacobian with
    step h = h_rel * sigma_t^2, checked against the closed-form Jacobian.
    """
    spec = spec or LipschitzSpec()
    d = model.training_set.d
    t_list = list(t_list) if t_list is not None else list(spec.t_values)
    if x_grid is None:
        line = np.linspace(spec.grid_lo, spec.grid_hi, spec.grid_points)
        x_grid = np.repeat(line[:, None], d, axis=1)
    grid, _ = model._as_batch(x_grid)

    report = StatReport(name="lipschitz")
    previous = None
    worst_rel = 0.0
    for t in t_list:
        h = spec.h_rel * float(model.schedule.sigma(t)) ** 2
        fd = finite_difference_jacobian(model, grid, t, h, label)
        exact = model.score_jacobian(grid, t, label)
        fd_norm = np.linalg.norm(fd, ord=2, axis=(1, 2))
        exact_norm = np.linalg.norm(exact, ord=2, axis=(1, 2))
        rel = float(np.linalg.norm(fd - exact, ord=2, axis=(1, 2)).max() / exact_norm.max())
        worst_rel = max(worst_rel, rel)
        peak = float(fd_norm.max())
        growth = None if previous is None else peak / previous
        report.add(CheckResult(
            name=f"lipschitz[t={t:g}]", sample_size=grid.shape[0], statistic=peak,
            details={
                "t": t,
                "argmax": grid[int(np.argmax(fd_norm))].tolist(),
                "analytic_max": float(exact_norm.max()),
                "growth": growth,
                "h": h,
            },
        ))
        previous = peak
    report.add(CheckResult(
        name="lipschitz.jacobian_agreement", sample_size=grid.shape[0] * len(t_list),
        statistic=worst_rel, threshold=spec.jacobian_tol, passed=worst_rel < spec.jacobian_tol,
    ))
    first, last = report.checks[0].statistic, report.checks[len(t_list) - 1].statistic
    report.add(CheckResult(
        name="lipschitz.growth", sample_size=len(t_list), statistic=last / first,
        details={"t_first": t_list[0], "t_last": t_list[-1]},
    ))
    return report


def brightness(x: np.ndarray) -> np.ndarray:
    """Scalar brightness of states: the mean over coordinates."""
    return np.asarray(x, dtype=float).mean(axis=-1)


def brightness_experiment(
    model: MixtureModel,
    epsilon: Optional[float] = None,
    init_modes: Optional[Sequence] = None,
    n: Optional[int] = None,
    spec: Optional[BrightnessSpec] = None,
    seed: int = 0,
    init_model=None,
    threads: Optional[int] = None,
    progress: bool = False,
) -> StatReport:
    """
    Compare initializations of the t=1-eps state per class.

    For each class and mode: the mean brightness of the x_{1-eps} ensemble,
    its energy distance to the true_forward ensemble, and the fraction of
    chains (interior steps unconditional) that end on a point of the class.
    """
    spec = spec or BrightnessSpec()
    updates = {"epsilon": epsilon, "n": n, "modes": list(init_modes) if init_modes is not None else None}
    spec = spec.model_copy(update={k: v for k, v in updates.items() if v is not None})
    modes = [InitMode(m) for m in spec.modes]
    classes = model.training_set.classes()
    if not classes:
        raise DomainError("the brightness experiment needs a labeled training set")
    alpha = float(model.schedule.alpha(1.0 - spec.epsilon))
    report = StatReport(name="brightness")

    for ci, label in enumerate(classes):
        name = model.training_set.class_names.get(label, str(label))
        ensembles = {}
        for mi, mode in enumerate(modes):
            state = initial_step(
                model, mode, label, init_model, spec.epsilon, rng=_rng(seed, 50, ci, mi), size=spec.n,
            )
            ensembles[mode] = state.x_one_minus_eps
            mean_b = float(brightness(state.x_one_minus_eps).mean())
            if mode is InitMode.NAIVE_GAUSSIAN:
                report.add(CheckResult(
                    name=f"{name}.{mode.value}.brightness", sample_size=spec.n, statistic=abs(mean_b),
                    threshold=spec.mean_tol, passed=abs(mean_b) < spec.mean_tol,
                    details={"brightness": mean_b},
                ))
            else:
                expected = alpha * float(brightness(model.training_set.class_mean(label)))
                rel = abs(mean_b - expected) / abs(expected) if expected != 0.0 else abs(mean_b)
                report.add(CheckResult(
                    name=f"{name}.{mode.value}.brightness", sample_size=spec.n, statistic=rel,
                    threshold=spec.rel_tol, passed=rel < spec.rel_tol,
                    details={"brightness": mean_b, "expected": expected},
                ))

        energies = {}
        if InitMode.TRUE_FORWARD in ensembles:
            reference = ensembles[InitMode.TRUE_FORWARD][:spec.energy_points]
            for mode, states in ensembles.items():
                if mode is InitMode.TRUE_FORWARD:
                    continue
                energies[mode] = energy_distance(states[:spec.energy_points], reference)
                report.add(CheckResult(
                    name=f"{name}.{mode.value}.energy_vs_true",
                    sample_size=min(spec.energy_points, spec.n),
                    statistic=energies[mode],
                ))
        if InitMode.NAIVE_GAUSSIAN in energies and InitMode.SING_STEP in energies:
            naive, sing = energies[InitMode.NAIVE_GAUSSIAN], energies[InitMode.SING_STEP]
            ratio = naive / sing if sing > 0.0 else math.inf
            report.add(CheckResult(
                name=f"{name}.energy_ratio", sample_size=min(spec.energy_points, spec.n),
                statistic=ratio, threshold=spec.energy_factor, passed=ratio > spec.energy_factor,
                details={"naive": naive, "sing_step": sing},
            ))

        if spec.hit_chains:
            for mi, mode in enumerate(modes):
                config = SamplerConfig(
                    method=spec.method, T=spec.T, epsilon=spec.epsilon, init_mode=mode,
                    seed=int(_rng(seed, 60, ci, mi).integers(2 ** 63)), chains=spec.hit_chains,
                )
                batch = run_chain(
                    model, config, label=None, init_model=init_model, threads=threads,
                    progress=progress, init_label=label,
                )
                nearest = model.nearest_index(batch.terminal, 0.0)
                hits = float(np.mean(model.training_set.labels[nearest] == label))
                report.add(CheckResult(
                    name=f"{name}.{mode.value}.hit_rate", sample_size=spec.hit_chains, statistic=hits,
                ))
    return report
