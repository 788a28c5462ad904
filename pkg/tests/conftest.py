import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).parent))

from singlab.datasets import BuiltinSource, InlineSource
from singlab.mixture import MixtureModel, TrainingSet
from singlab.schedule import CosineSchedule, TabularSchedule


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo runs of the acceptance sizes")


@pytest.fixture
def cosine():
    return CosineSchedule()


@pytest.fixture
def two_point(cosine):
    """y = {-1, +1}, labels 0 / 1, cosine schedule."""
    return MixtureModel(BuiltinSource("two-point").load(), cosine)


@pytest.fixture
def brightness_model(cosine):
    return MixtureModel(BuiltinSource("brightness-toy").load(), cosine)


@pytest.fixture
def single_point(cosine):
    return MixtureModel(TrainingSet.from_array([[2.0]]), cosine)


def tabular_with(alpha_mid: float, t_mid: float = 0.5) -> TabularSchedule:
    """Tabular schedule pinning alpha(t_mid) = alpha_mid."""
    return TabularSchedule([0.0, t_mid, 1.0], [1.0, alpha_mid, 0.0])


def inline_model(points, labels=None, schedule=None) -> MixtureModel:
    return MixtureModel(InlineSource(points, labels).load(), schedule or CosineSchedule())
