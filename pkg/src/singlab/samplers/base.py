from abc import ABC, abstractmethod
from enum import Enum
from typing import Dict, List, Optional, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from singlab.guidance import Denoiser, GuidanceConfig


class SamplerMethod(str, Enum):
    DDPM = "ddpm"
    DDPM_EPS = "ddpm_eps"
    DDIM = "ddim"
    DDIM_FIRST_ORDER = "ddim_first_order"
    SDE_EM = "sde_em"
    ODE_EULER = "ode_euler"
    ODE_RK4 = "ode_rk4"


class InitMode(str, Enum):
    NAIVE_GAUSSIAN = "naive_gaussian"
    SING_STEP = "sing_step"
    TRUE_FORWARD = "true_forward"
    METHOD_STEP = "method_step"


class FinalMode(str, Enum):
    YBAR_COLLAPSE = "ybar_collapse"
    PLAIN_LAST_STEP = "plain_last_step"


class SamplerConfig(BaseModel):
    """Reverse sampler settings (config block `sampler`)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: SamplerMethod = Field(default=SamplerMethod.DDPM, description="Reverse step rule")
    T: int = Field(default=1000, ge=2, description="Number of grid steps")
    epsilon: Optional[float] = Field(
        default=None,
        gt=0.0,
        lt=0.5,
        description="Time margin at both ends of the grid (default 1/T)"
    )
    init_mode: InitMode = Field(default=InitMode.SING_STEP, description="How x at t=1-eps is produced")
    final_mode: FinalMode = Field(default=FinalMode.YBAR_COLLAPSE, description="Last transition eps -> 0")
    guidance: Optional[GuidanceConfig] = Field(default=None, description="Classifier-free guidance")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed")
    chains: int = Field(default=1000, ge=1, description="Number of chains")
    batch_size: int = Field(
        default=256,
        ge=1,
        description="Chains advanced together; fixed so results do not depend on thread count"
    )
    record_every: int = Field(
        default=1,
        ge=1,
        description="Keep every k-th grid state (start, t=1-eps and terminal are always kept)"
    )
    fixed_x1: Optional[List[float]] = Field(
        default=None,
        description="Share one x at t=1 across all chains"
    )

    @property
    def eps(self) -> float:
        return 1.0 / self.T if self.epsilon is None else self.epsilon

    @model_validator(mode="after")
    def _check_margin(self):
        if self.epsilon is None and not (0.0 < 1.0 / self.T < 0.5):
            raise ValueError(f"default epsilon 1/T lies outside (0, 0.5) for T={self.T}")
        return self


class ReverseStep(ABC):
    """One reverse transition x_t -> x_s on a batch of states."""

    name: SamplerMethod
    stochastic: bool = False

    @abstractmethod
    def step(
        self,
        denoiser: Denoiser,
        x: np.ndarray,
        t: float,
        s: float,
        z: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Advance (B, d) states from time t down to s < t.

        Args:
            denoiser: closed-form predictions, possibly guided
            x: states at time t
            t: current time
            s: target time
            z: standard normal draws of x's shape (stochastic methods only)

        Returns:
            states at time s
        """
        pass


_REGISTRY: Dict[SamplerMethod, Type[ReverseStep]] = {}


def register(cls: Type[ReverseStep]) -> Type[ReverseStep]:
    _REGISTRY[cls.name] = cls
    return cls


def get_step(method) -> ReverseStep:
    return _REGISTRY[SamplerMethod(method)]()
