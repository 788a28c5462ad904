"""Energy statistics for comparing sample ensembles."""

from typing import Optional

import dcor
import numpy as np
from scipy.spatial.distance import cdist

from singlab.errors import DomainError

# rows per cdist block
_CHUNK = 1024


def _as_samples(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 2:
        raise DomainError(f"{name} must hold at least two samples")
    return a


def _distance_sum(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape[1] == 1:
        return _distance_sum_1d(a[:, 0], b[:, 0])
    total = 0.0
    for start in range(0, a.shape[0], _CHUNK):
        total += float(cdist(a[start:start + _CHUNK], b).sum())
    return total


def _distance_sum_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of |a_i - b_j| over all pairs through sorted prefix sums."""
    b = np.sort(b)
    prefix = np.concatenate([[0.0], np.cumsum(b)])
    below = np.searchsorted(b, a)
    m = b.size
    total = a * below - prefix[below] + (prefix[m] - prefix[below]) - a * (m - below)
    return float(total.sum())


def energy_distance(a, b) -> float:
    """
    Energy distance 2E|a-b| - E|a-a'| - E|b-b'|.

    The within-sample terms are U-statistics (diagonal excluded); the value is
    truncated at 0, so identical samples give exactly 0.
    """
    a = _as_samples(a, "A")
    b = _as_samples(b, "B")
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"sample dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    cross = _distance_sum(a, b) / (n * m)
    within_a = _distance_sum(a, a) / (n * (n - 1))
    within_b = _distance_sum(b, b) / (m * (m - 1))
    return max(2.0 * cross - within_a - within_b, 0.0)


def energy_test(
    a,
    b,
    resamples: int = 200,
    rng: Optional[np.random.Generator] = None,
    max_points: Optional[int] = 2000,
) -> float:
    """
    Permutation-test p-value of the homogeneity hypothesis A ~ B.

    Samples larger than `max_points` are cut to their first `max_points` rows.
    """
    a = _as_samples(a, "A")
    b = _as_samples(b, "B")
    if max_points is not None:
        a, b = a[:max_points], b[:max_points]
    rng = rng if rng is not None else np.random.default_rng(0)
    result = dcor.homogeneity.energy_test(a, b, num_resamples=resamples, random_state=rng)
    return float(result.pvalue)


def energy_null_quantile(
    a,
    b,
    level: float = 0.95,
    resamples: int = 199,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Quantile of the energy distance under random relabelling of the pooled sample.

    Works on full batches without a pooled distance matrix, so it suits
    samples too large for `energy_test`.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    a = _as_samples(a, "A")
    b = _as_samples(b, "B")
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"sample dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    pooled = np.concatenate([a, b])
    n = a.shape[0]
    null = np.empty(resamples)
    for k in range(resamples):
        order = rng.permutation(pooled.shape[0])
        null[k] = energy_distance(pooled[order[:n]], pooled[order[n:]])
    return float(np.quantile(null, level))
