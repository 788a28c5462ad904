"""
Classifier-free guidance for the closed-form denoiser.

The initial step at t=1 combines class-mean predictions of ybar (optionally
normalized); interior steps combine noise predictions without normalization.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from singlab.errors import DomainError
from singlab.mixture import Label, MixtureModel

UNCONDITIONAL = "unconditional"


class GuidanceConfig(BaseModel):
    """Guidance settings (config block `guidance`)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    scale: float = Field(
        default=1.0,
        ge=1.0,
        description="Guidance scale w; 1 disables guidance"
    )
    normalize_initial: bool = Field(
        default=True,
        description="Divide the guided ybar of the t=1 step by w"
    )
    pos_label: int = Field(
        description="Class id of the positive (conditioning) output"
    )
    neg_label: Union[int, Literal["unconditional"]] = Field(
        default=UNCONDITIONAL,
        description="Class id of the negative output, or 'unconditional' for the whole set"
    )

    @property
    def neg(self) -> Label:
        return None if self.neg_label == UNCONDITIONAL else int(self.neg_label)


def guided_combine(o_pos, o_neg, w: float, normalize: bool = False) -> np.ndarray:
    """
    Combine positive and negative outputs.

    Args:
        o_pos: positive output
        o_neg: negative output of the same shape
        w: guidance scale, at least 1
        normalize: divide the combination by w

    Returns:
        o_neg + w (o_pos - o_neg), or that value divided by w
    """
    if w < 1.0:
        raise DomainError(f"guidance scale must be >= 1, got {w}")
    o_pos = np.asarray(o_pos, dtype=float)
    o_neg = np.asarray(o_neg, dtype=float)
    if o_pos.shape != o_neg.shape:
        raise DomainError(f"guidance outputs differ in shape: {o_pos.shape} vs {o_neg.shape}")
    combined = w * o_pos + (1.0 - w) * o_neg
    # normalized output is the unnormalized one divided by w, bit for bit
    return combined / w if normalize else combined


@dataclass(frozen=True)
class Denoiser:
    """
    Predictions the reverse steps consume: ybar, the noise eps and the score.

    Without guidance every prediction is the closed form for `label`. With
    guidance the positive label comes from the guidance config.
    """
    model: MixtureModel
    label: Label = None
    guidance: Optional[GuidanceConfig] = None

    def __post_init__(self):
        if self.guidance is not None:
            if self.label is not None and self.label != self.guidance.pos_label:
                raise DomainError(
                    f"label {self.label} conflicts with guidance pos_label {self.guidance.pos_label}"
                )
            self.model.training_set.select(self.guidance.pos_label)
            self.model.training_set.select(self.guidance.neg)
            object.__setattr__(self, "label", self.guidance.pos_label)
        elif self.label is not None:
            self.model.training_set.select(self.label)

    @property
    def guided(self) -> bool:
        return self.guidance is not None

    def ybar(self, x, t: float) -> np.ndarray:
        if not self.guided:
            return self.model.ybar(x, t, self.label)
        g = self.guidance
        if t >= 1.0:
            return guided_combine(
                self.model.ybar(x, t, g.pos_label),
                self.model.ybar(x, t, g.neg),
                g.scale,
                normalize=g.normalize_initial,
            )
        alpha = float(self.model.schedule.alpha(t))
        sigma = float(self.model.schedule.sigma(t))
        x = np.asarray(x, dtype=float)
        return (x - sigma * self.eps(x, t).reshape(x.shape)) / alpha

    def eps(self, x, t: float) -> np.ndarray:
        if not self.guided:
            return self.model.score_and_eps(x, t, self.label).eps
        g = self.guidance
        return guided_combine(
            self.model.score_and_eps(x, t, g.pos_label).eps,
            self.model.score_and_eps(x, t, g.neg).eps,
            g.scale,
        )

    def score(self, x, t: float) -> np.ndarray:
        if not self.guided:
            return self.model.score_and_eps(x, t, self.label).score
        return -self.eps(x, t) / float(self.model.schedule.sigma(t))
