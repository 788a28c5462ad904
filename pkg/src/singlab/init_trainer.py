"""
Fitting the t=1 predictor.

At t=1 the optimal prediction of x0 ignores x1, so the predictor is one
constant vector per class (plus one for the whole set), fitted by plain SGD
on the squared error against training points.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from singlab.errors import ConfigError, DivergenceDetected, UnknownLabel
from singlab.mixture import Label, TrainingSet

logger = logging.getLogger(__name__)

UNCONDITIONAL_KEY = "unconditional"

# consecutive loss increases that count as divergence
DIVERGENCE_PATIENCE = 100


class TrainConfig(BaseModel):
    """SGD settings (config block `train`)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(default=0.1, gt=0.0, description="Initial learning rate")
    lr_decay: float = Field(
        default=0.01,
        ge=0.0,
        description="Step k uses lr / (1 + k * lr_decay)"
    )
    steps: int = Field(default=5000, ge=0, description="SGD steps per class")
    batch_size: int = Field(default=256, ge=1, description="Training points drawn per step")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Seed of the point draws")
    tolerance: float = Field(
        default=1e-2,
        gt=0.0,
        description="Largest accepted distance between a fitted vector and its class mean"
    )


class InitModel(BaseModel):
    """Fitted t=1 predictor: class key -> constant vector."""
    means: Dict[str, List[float]] = Field(description="Class id (or 'unconditional') -> vector")
    steps: int = Field(description="SGD steps run per class")
    final_loss: Dict[str, float] = Field(default_factory=dict, description="Last batch loss per class")
    loss_history: Dict[str, List[float]] = Field(
        default_factory=dict,
        description="Batch loss per step and class"
    )

    def save(self, path) -> None:
        from singlab.output import write_json_atomic

        write_json_atomic(path, self.model_dump())

    @classmethod
    def load(cls, path) -> "InitModel":
        with open(path) as f:
            return cls.model_validate(json.load(f))


def _key(label: Label) -> str:
    return UNCONDITIONAL_KEY if label is None else str(int(label))


def _fit_one(
    points: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    key: str,
    progress: bool,
):
    mu = np.zeros(points.shape[1])
    losses: List[float] = []
    increases = 0
    for k in tqdm(range(config.steps), desc=f"class {key}", unit="step", disable=not progress):
        x0 = points[rng.integers(points.shape[0], size=config.batch_size)]
        residual = mu[None, :] - x0
        loss = float(np.einsum("bd,bd->", residual, residual) / config.batch_size)
        if not math.isfinite(loss):
            raise DivergenceDetected(f"class {key}: loss became non-finite at step {k}")
        if losses and loss > losses[-1]:
            increases += 1
            if increases >= DIVERGENCE_PATIENCE:
                raise DivergenceDetected(
                    f"class {key}: loss grew for {DIVERGENCE_PATIENCE} consecutive steps "
                    f"(lr={config.lr} too high)"
                )
        else:
            increases = 0
        losses.append(loss)
        lr = config.lr / (1.0 + k * config.lr_decay)
        mu = mu - lr * 2.0 * residual.mean(axis=0)
    return mu, losses


def fit_init_model(training_set: TrainingSet, config: TrainConfig, progress: bool = False) -> InitModel:
    """
    Fit one constant predictor per class and one for the whole set.

    Args:
        training_set: labeled or unlabeled points
        config: SGD settings
        progress: show progress bars

    Returns:
        InitModel
    """
    labels: List[Label] = [None] + training_set.classes()
    means: Dict[str, List[float]] = {}
    final_loss: Dict[str, float] = {}
    history: Dict[str, List[float]] = {}

    for index, label in enumerate(labels):
        key = _key(label)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, index])))
        points = training_set.points[training_set.select(label)]
        mu, losses = _fit_one(points, config, rng, key, progress)
        means[key] = mu.tolist()
        history[key] = losses
        if losses:
            final_loss[key] = losses[-1]
        logger.debug("class %s: %d steps, final loss %s", key, config.steps, final_loss.get(key))

    return InitModel(means=means, steps=config.steps, final_loss=final_loss, loss_history=history)


def predict_init(model: InitModel, label: Label = None) -> np.ndarray:
    """The fitted t=1 prediction for `label` (None for the whole set)."""
    key = _key(label)
    if key not in model.means:
        raise UnknownLabel(f"init model has no class {key}; trained: {sorted(model.means)}")
    return np.asarray(model.means[key], dtype=float)


def load_init_model(path: Optional[str]) -> Optional[InitModel]:
    if path is None:
        return None
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"init model file '{path}' not found")
    return InitModel.load(path)
