"""Builtin training sets, so experiments run without external files."""

from typing import Callable, Dict

import numpy as np

from singlab.errors import DomainError
from singlab.mixture import TrainingSet

from .base import DatasetSource

BRIGHTNESS_DIM = 16


def two_point() -> TrainingSet:
    """y = {-1, +1} in 1-D, one class per point."""
    return TrainingSet.from_array([[-1.0], [1.0]], labels=[0, 1], class_names={0: "minus", 1: "plus"})


def brightness_toy() -> TrainingSet:
    """d=16; class 'dark' holds -1 everywhere, class 'bright' +1 everywhere."""
    ones = np.ones(BRIGHTNESS_DIM)
    return TrainingSet.from_array(
        np.stack([-ones, ones]), labels=[0, 1], class_names={0: "dark", 1: "bright"}
    )


def grid_9() -> TrainingSet:
    """The 3x3 grid {-1, 0, 1}^2 in 2-D, unlabeled."""
    axis = np.array([-1.0, 0.0, 1.0])
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return TrainingSet.from_array(np.column_stack([xx.ravel(), yy.ravel()]))


BUILTIN_DATASETS: Dict[str, Callable[[], TrainingSet]] = {
    "two-point": two_point,
    "brightness-toy": brightness_toy,
    "grid-9": grid_9,
}


class BuiltinSource(DatasetSource):
    """One of the named builtin sets."""

    def __init__(self, name: str):
        if name not in BUILTIN_DATASETS:
            raise DomainError(
                f"unknown builtin dataset '{name}'; choose from {sorted(BUILTIN_DATASETS)}"
            )
        self.name = name

    def load(self) -> TrainingSet:
        return BUILTIN_DATASETS[self.name]()

    def describe(self) -> str:
        return f"builtin:{self.name}"
