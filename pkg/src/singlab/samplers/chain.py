"""
Full reverse chains: initial step, interior loop and the final collapse.

Each chain owns a counter-based random stream keyed by (seed, chain index).
Chains advance in fixed-size batches, so a chain's trajectory does not depend
on how many worker threads run or how many other chains are requested.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from singlab.errors import DomainError, SingularStep
from singlab.guidance import Denoiser, GuidanceConfig, guided_combine
from singlab.mixture import Label, MixtureModel
from singlab.schedule import time_grid

from .base import FinalMode, InitMode, SamplerConfig, SamplerMethod, get_step

logger = logging.getLogger(__name__)

# step-noise rows drawn per chain at a time
_NOISE_CHUNK = 128

_DEFAULT = object()


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent Philox stream for one chain."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain)])))


@dataclass(frozen=True)
class InitialState:
    """x at t=1 (None for true_forward) and the state at t=1-eps."""
    x1: Optional[np.ndarray]
    x_one_minus_eps: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    label: Label
    seed: int
    chain: int
    x1: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TrajectoryBatch:
    """Recorded states of many chains on a shared time grid, shape (chains, times, d)."""
    times: np.ndarray
    states: np.ndarray
    x1: Optional[np.ndarray]
    label: Label
    seed: int
    method: SamplerMethod

    @property
    def chains(self) -> int:
        return self.states.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]

    def at(self, t: float) -> np.ndarray:
        """States at the recorded grid time closest to t."""
        index = int(np.argmin(np.abs(self.times - t)))
        return self.states[:, index, :]

    def trajectory(self, chain: int) -> Trajectory:
        return Trajectory(
            times=self.times,
            states=self.states[chain],
            label=self.label,
            seed=self.seed,
            chain=chain,
            x1=None if self.x1 is None else self.x1[chain],
        )


def _initial_ybar(denoiser: Denoiser, x1: np.ndarray, init_model) -> np.ndarray:
    """ybar at t=1 from the fitted init model, or the exact class mean."""
    if init_model is None:
        return denoiser.ybar(x1, 1.0)

    from singlab.init_trainer import predict_init

    g = denoiser.guidance
    if g is None:
        mean = predict_init(init_model, denoiser.label)
    else:
        mean = guided_combine(
            predict_init(init_model, g.pos_label),
            predict_init(init_model, g.neg),
            g.scale,
            normalize=g.normalize_initial,
        )
    if mean.shape != (denoiser.model.training_set.d,):
        raise DomainError(f"init model has dimension {mean.shape[0]}, data has {denoiser.model.training_set.d}")
    return np.broadcast_to(mean, x1.shape)


def _initialize(
    denoiser: Denoiser,
    mode: InitMode,
    epsilon: float,
    x1: np.ndarray,
    z0: np.ndarray,
    picks: np.ndarray,
    init_model=None,
    method: Optional[SamplerMethod] = None,
) -> InitialState:
    """Turn one batch of draws into the initial state for `mode`."""
    model = denoiser.model
    start = 1.0 - epsilon
    alpha = float(model.schedule.alpha(start))
    sigma = float(model.schedule.sigma(start))

    if mode is InitMode.NAIVE_GAUSSIAN:
        return InitialState(x1=x1, x_one_minus_eps=z0.copy())

    if mode is InitMode.SING_STEP:
        ybar = _initial_ybar(denoiser, x1, init_model)
        return InitialState(x1=x1, x_one_minus_eps=alpha * ybar + sigma * x1)

    if mode is InitMode.TRUE_FORWARD:
        pool = model.training_set.points[model.training_set.select(denoiser.label)]
        return InitialState(x1=None, x_one_minus_eps=alpha * pool[picks] + sigma * z0)

    rule = get_step(method or SamplerMethod.DDPM)
    z = z0 if rule.stochastic else None
    return InitialState(x1=x1, x_one_minus_eps=rule.step(denoiser, x1, 1.0, start, z))


def initial_step(
    model: MixtureModel,
    mode,
    label: Label = None,
    init_model=None,
    epsilon: float = 0.05,
    rng: Optional[np.random.Generator] = None,
    size: Optional[int] = None,
    guidance: Optional[GuidanceConfig] = None,
    method=None,
) -> InitialState:
    """
    Produce x at t=1 and the state at t=1-eps.

    Args:
        model: mixture model
        mode: naive_gaussian, sing_step, true_forward or method_step
        label: class to start from (None for the whole set)
        init_model: fitted InitModel; sing_step falls back to the exact class mean
        epsilon: time margin
        rng: random generator
        size: number of states; None draws a single state
        guidance: optional guidance for the t=1 prediction
        method: step rule used by method_step

    Returns:
        InitialState
    """
    mode = InitMode(mode)
    denoiser = Denoiser(model, label, guidance)
    rng = rng if rng is not None else np.random.default_rng()
    n = 1 if size is None else int(size)
    d = model.training_set.d
    pool_size = model.training_set.select(denoiser.label).size
    picks = rng.integers(pool_size, size=n)
    draws = rng.standard_normal((n, 2, d))
    state = _initialize(
        denoiser, mode, epsilon, draws[:, 0], draws[:, 1], picks,
        init_model=init_model, method=SamplerMethod(method) if method else None,
    )
    if size is None:
        return InitialState(
            x1=None if state.x1 is None else state.x1[0],
            x_one_minus_eps=state.x_one_minus_eps[0],
        )
    return state


def final_step(model: MixtureModel, x_t, t: float, label: Label = None, guidance=None) -> np.ndarray:
    """Collapse to x0 = ybar(x_t, t)."""
    return Denoiser(model, label, guidance).ybar(x_t, t)


class ChainRunner:
    """Runs a configured set of chains and records their trajectories."""

    def __init__(
        self,
        model: MixtureModel,
        config: SamplerConfig,
        label: Label = None,
        init_model=None,
        init_label=_DEFAULT,
    ):
        """
        Args:
            model: mixture model shared read-only by all chains
            config: sampler settings
            label: class the interior steps condition on
            init_model: fitted InitModel for sing_step
            init_label: class the initial step uses (defaults to `label`)
        """
        self.model = model
        self.config = config
        self.init_model = init_model
        self.rule = get_step(config.method)
        self.denoiser = Denoiser(model, label, config.guidance)
        if init_label is _DEFAULT or init_label == self.denoiser.label:
            self.init_denoiser = self.denoiser
        else:
            self.init_denoiser = Denoiser(model, init_label, config.guidance)
        self.d = model.training_set.d
        self.pool_size = model.training_set.select(self.init_denoiser.label).size

        if config.fixed_x1 is not None:
            self.fixed_x1 = np.asarray(config.fixed_x1, dtype=float)
            if self.fixed_x1.shape != (self.d,):
                raise DomainError(f"fixed_x1 has {self.fixed_x1.size} coordinates, data has d={self.d}")
        else:
            self.fixed_x1 = None

        grid = time_grid(config.T, config.eps)
        self.interior = grid[1:-1]
        self.has_x1 = config.init_mode is not InitMode.TRUE_FORWARD
        self.collapse = config.final_mode is FinalMode.YBAR_COLLAPSE

        times = list(self.interior)
        offset = 0
        if self.has_x1:
            times.insert(0, 1.0)
            offset = 1
        if self.collapse:
            times.append(0.0)
        keep = {0, offset, len(times) - 1}
        keep.update(offset + k for k in range(0, len(self.interior), config.record_every))
        keep.add(offset + len(self.interior) - 1)
        self.record = np.array(sorted(keep))
        self.times = np.asarray(times)[self.record]
        self._slot = {int(pos): i for i, pos in enumerate(self.record)}
        self._offset = offset

    def _run_batch(self, chain_ids: Sequence[int]):
        cfg = self.config
        gens = [chain_rng(cfg.seed, c) for c in chain_ids]
        picks = np.array([g.integers(self.pool_size) for g in gens])
        head = np.stack([g.standard_normal((2, self.d)) for g in gens])
        x1 = head[:, 0] if self.fixed_x1 is None else np.tile(self.fixed_x1, (len(gens), 1))

        init = _initialize(
            self.init_denoiser, cfg.init_mode, cfg.eps, x1, head[:, 1], picks,
            init_model=self.init_model, method=cfg.method,
        )
        out = np.empty((len(gens), self.record.size, self.d))
        slot = self._slot

        if self.has_x1:
            out[:, 0] = x1
        x = init.x_one_minus_eps
        if self._offset in slot:
            out[:, slot[self._offset]] = x

        n_steps = self.interior.size - 1
        noise = None
        for k in range(n_steps):
            if self.rule.stochastic and k % _NOISE_CHUNK == 0:
                rows = min(_NOISE_CHUNK, n_steps - k)
                noise = np.stack([g.standard_normal((rows, self.d)) for g in gens])
            t, s = float(self.interior[k]), float(self.interior[k + 1])
            z = noise[:, k % _NOISE_CHUNK] if self.rule.stochastic else None
            try:
                x = self.rule.step(self.denoiser, x, t, s, z)
            except SingularStep:
                logger.error("chains %d-%d aborted at t=%g", chain_ids[0], chain_ids[-1], t)
                raise
            pos = self._offset + k + 1
            if pos in slot:
                out[:, slot[pos]] = x

        if self.collapse:
            out[:, -1] = self.denoiser.ybar(x, float(self.interior[-1]))
        return out, (x1 if self.has_x1 else None)

    def run(self, threads: Optional[int] = None, progress: bool = False) -> TrajectoryBatch:
        cfg = self.config
        ids = np.arange(cfg.chains)
        batches: List[np.ndarray] = [ids[i:i + cfg.batch_size] for i in range(0, cfg.chains, cfg.batch_size)]
        workers = max(1, threads or os.cpu_count() or 1)
        logger.debug(
            "running %d chains (%s, T=%d, init=%s) in %d batches on %d threads",
            cfg.chains, cfg.method.value, cfg.T, cfg.init_mode.value, len(batches), workers,
        )

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(
                pool.map(self._run_batch, batches),
                total=len(batches),
                desc=f"{cfg.method.value} chains",
                unit="batch",
                disable=not progress,
            ))

        states = np.concatenate([r[0] for r in results])
        x1 = None if not self.has_x1 else np.concatenate([r[1] for r in results])
        return TrajectoryBatch(
            times=self.times,
            states=states,
            x1=x1,
            label=self.denoiser.label,
            seed=cfg.seed,
            method=cfg.method,
        )


def run_chain(
    model: MixtureModel,
    config: SamplerConfig,
    label: Label = None,
    init_model=None,
    threads: Optional[int] = None,
    progress: bool = False,
    init_label=_DEFAULT,
) -> TrajectoryBatch:
    """
    Sample `config.chains` chains on the grid 1, 1-eps, ..., eps (, 0).

    Args:
        model: mixture model
        config: sampler settings
        label: class to condition on (None for the whole set)
        init_model: fitted InitModel used by sing_step
        threads: worker threads (default: CPU count)
        progress: show a progress bar
        init_label: class for the initial step when it differs from `label`

    Returns:
        TrajectoryBatch
    """
    return ChainRunner(model, config, label, init_model, init_label).run(threads, progress)
