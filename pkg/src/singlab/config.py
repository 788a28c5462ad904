"""
Experiment configuration.

One JSON document drives every subcommand. Each block is a pydantic model with
unknown keys rejected; `ExperimentConfig.model_json_schema()` is the published
schema.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from singlab.datasets import BuiltinSource, CsvSource, DatasetSource, InlineSource
from singlab.errors import ConfigError
from singlab.guidance import GuidanceConfig
from singlab.init_trainer import TrainConfig
from singlab.mixture import MixtureModel
from singlab.samplers import SamplerConfig
from singlab.schedule import ScheduleKind, make_schedule
from singlab.verify import BrightnessSpec, ConsistencySpec, LipschitzSpec, Prop3Spec, QuadConfig, SweepSpec

SEED_ENV = "SINGLAB_SEED"


class DatasetConfig(BaseModel):
    """Training-set source: exactly one of builtin, csv or points."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    builtin: Optional[str] = Field(default=None, description="two-point, brightness-toy or grid-9")
    csv: Optional[str] = Field(default=None, description="CSV path, one point per row, optional 'label' column")
    points: Optional[List[List[float]]] = Field(default=None, description="Inline points")
    labels: Optional[List[int]] = Field(default=None, description="Labels of the inline points")

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("builtin", "csv", "points") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"give exactly one of builtin, csv, points (got {given or 'none'})")
        if self.labels is not None and self.points is None:
            raise ValueError("labels only apply to inline points")
        return self

    def source(self, base_dir: Optional[Path] = None) -> DatasetSource:
        if self.builtin is not None:
            return BuiltinSource(self.builtin)
        if self.csv is not None:
            path = Path(self.csv)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return CsvSource(path)
        return InlineSource(self.points, self.labels)


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScheduleKind = Field(default=ScheduleKind.COSINE, description="Noise schedule")
    params: Dict[str, Any] = Field(default_factory=dict, description="Tabular: times and alphas")


class BoundsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sweeps: List[SweepSpec] = Field(
        default_factory=lambda: [
            SweepSpec(
                which="prop1", s=0.5,
                values=[round(0.51 + 0.01 * i, 2) for i in range(20)],
                probes=[-2.0, 0.0, 2.0],
            ),
            SweepSpec(
                which="prop2", t=1.0,
                values=[0.9, 0.92, 0.94, 0.96, 0.98, 0.99, 0.995, 0.999],
            ),
            SweepSpec(
                which="terminal_marginal",
                values=[0.8, 0.85, 0.9, 0.95, 0.99],
            ),
        ],
        description="Sweeps to run"
    )
    quad: QuadConfig = Field(default_factory=QuadConfig)
    threshold_s: List[float] = Field(
        default_factory=lambda: [0.5],
        description="Times s at which the regime thresholds are reported"
    )


class VerifyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    bounds: BoundsConfig = Field(default_factory=BoundsConfig)
    prop3: Prop3Spec = Field(default_factory=Prop3Spec)
    consistency: ConsistencySpec = Field(default_factory=ConsistencySpec)
    lipschitz: LipschitzSpec = Field(default_factory=LipschitzSpec)
    brightness: BrightnessSpec = Field(default_factory=BrightnessSpec)


class ExperimentConfig(BaseModel):
    """Top-level experiment document."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset: DatasetConfig
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    guidance: Optional[GuidanceConfig] = Field(default=None, description="Classifier-free guidance")
    train: TrainConfig = Field(default_factory=TrainConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    label: Optional[int] = Field(default=None, description="Class to sample (None for the whole set)")
    init_model: Optional[str] = Field(default=None, description="Fitted init model JSON for sing_step")
    output_dir: str = Field(default="results", description="Where reports are written")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed")
    threads: Optional[int] = Field(default=None, ge=1, description="Worker threads (default: CPU count)")

    @model_validator(mode="after")
    def _one_guidance(self):
        if self.guidance is not None and self.sampler.guidance is not None and self.guidance != self.sampler.guidance:
            raise ValueError("guidance is given both at top level and in sampler, with different values")
        return self

    @property
    def effective_guidance(self) -> Optional[GuidanceConfig]:
        return self.guidance or self.sampler.guidance

    def build_model(self, base_dir: Optional[Path] = None) -> MixtureModel:
        training_set = self.dataset.source(base_dir).load()
        schedule = make_schedule(self.schedule.kind.value, self.schedule.params)
        return MixtureModel(training_set, schedule)


def load_config(path) -> ExperimentConfig:
    """
    Read and validate a config file.

    Raises:
        ConfigError: unreadable file, bad JSON or a schema violation (pointing
            at the first offending key)
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file '{path}' not found")
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{path}: {where}: {first['msg']} ({e.error_count()} error(s))") from None


def resolve_seed(config: ExperimentConfig, flag: Optional[int] = None) -> int:
    """Seed precedence: --seed flag, then SINGLAB_SEED, then the config."""
    if flag is not None:
        return flag
    env = os.getenv(SEED_ENV)
    if env:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"{SEED_ENV}={seed} lies outside [0, 2^64)")
        return seed
    return config.seed


def resolve_threads(config: ExperimentConfig, flag: Optional[int] = None) -> int:
    """Thread precedence: --threads flag, then the config, then the CPU count."""
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--threads must be positive, got {flag}")
        return flag
    return config.threads or os.cpu_count() or 1


def schema_json() -> str:
    return json.dumps(ExperimentConfig.model_json_schema(), indent=2, sort_keys=True)
