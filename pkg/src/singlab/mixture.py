"""
Closed-form evaluator for the diffused empirical distribution.

A finite training set y_1..y_N diffused by a noise schedule is a Gaussian
mixture at every t > 0, so the posterior weights, the posterior mean ybar,
the score, the noise prediction and all four densities of the reverse process
have exact expressions. Every exponent is handled in the log domain.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import logsumexp, softmax

from singlab.errors import DegenerateDensity, DomainError
from singlab.schedule import NoiseSchedule, _check_time

Label = Optional[int]


@dataclass(frozen=True)
class TrainingSet:
    """N points in R^d with optional integer class labels."""
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    class_names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise DomainError("a training set needs at least one point")
        if not np.all(np.isfinite(points)):
            raise DomainError("training points must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = np.array(self.labels, dtype=int)
            if labels.shape != (points.shape[0],):
                raise DomainError(f"got {labels.size} labels for {points.shape[0]} points")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_array(cls, points, labels=None, class_names=None) -> "TrainingSet":
        return cls(points=points, labels=labels, class_names=dict(class_names or {}))

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def classes(self) -> list:
        if self.labels is None:
            return []
        return sorted(int(c) for c in np.unique(self.labels))

    def select(self, label: Label = None) -> np.ndarray:
        """Indices of the points in class `label` (all points when label is None)."""
        if label is None:
            return np.arange(self.N)
        if self.labels is None:
            raise DomainError(f"class {label} requested from an unlabeled training set")
        index = np.flatnonzero(self.labels == int(label))
        if index.size == 0:
            raise DomainError(f"class {label} has no points")
        return index

    def class_mean(self, label: Label = None) -> np.ndarray:
        return self.points[self.select(label)].mean(axis=0)


@dataclass(frozen=True)
class LemmaConstants:
    M1: float
    M2: float
    M: float


@dataclass(frozen=True)
class ScoreEps:
    score: np.ndarray
    eps: np.ndarray


class DensityKind(str, Enum):
    MARGINAL = "marginal"
    FORWARD_COND = "forward_cond"
    REVERSE_EXACT = "reverse_exact"
    REVERSE_GAUSS = "reverse_gauss"


def lemma_constants(training_set: TrainingSet) -> LemmaConstants:
    """M1 = max pairwise distance, M2 = max norm, M = M1 + M2."""
    points = training_set.points
    M1 = float(pdist(points).max()) if training_set.N > 1 else 0.0
    M2 = float(np.linalg.norm(points, axis=1).max())
    return LemmaConstants(M1=M1, M2=M2, M=M1 + M2)


def _gaussian_log_norm(d: int, var: float) -> float:
    return -0.5 * d * math.log(2.0 * math.pi * var)


@dataclass(frozen=True)
class MixtureModel:
    """A training set paired with a schedule. All methods are pure."""
    training_set: TrainingSet
    schedule: NoiseSchedule

    def _points(self, label: Label) -> np.ndarray:
        return self.training_set.points[self.training_set.select(label)]

    def _as_batch(self, x) -> tuple:
        """(B, d) view of x plus whether x was a single state."""
        x = np.asarray(x, dtype=float)
        d = self.training_set.d
        if x.ndim == 0:
            x = x.reshape(1)
        if x.ndim == 1:
            if x.shape[0] == d:
                return x[None, :], True
            if d == 1:
                # flat vector of 1-D states
                return x[:, None], False
        if x.ndim == 2 and x.shape[1] == d:
            return x, False
        raise DomainError(f"state of shape {x.shape} does not match d={d}")

    def _sq_dist(self, x: np.ndarray, pts: np.ndarray, alpha: float) -> np.ndarray:
        diff = x[:, None, :] - alpha * pts[None, :, :]
        return np.einsum("bnd,bnd->bn", diff, diff)

    def posterior_weights(self, x, t: float, label: Label = None) -> np.ndarray:
        """
        Posterior weights w_i(x, t) over the selected points.

        At t=0 (sigma=0) the weights are the limit: uniform over the exactly
        nearest points.
        """
        t = _check_time(t)
        pts = self._points(label)
        batch, single = self._as_batch(x)
        alpha = float(self.schedule.alpha(t))
        sigma = float(self.schedule.sigma(t))
        sq = self._sq_dist(batch, pts, alpha)
        if sigma == 0.0:
            nearest = sq == sq.min(axis=1, keepdims=True)
            weights = nearest / nearest.sum(axis=1, keepdims=True)
        else:
            weights = softmax(-sq / (2.0 * sigma * sigma), axis=1)
        return weights[0] if single else weights

    def ybar(self, x, t: float, label: Label = None) -> np.ndarray:
        """Posterior mean of the training points given x at time t."""
        weights = self.posterior_weights(x, t, label)
        pts = self._points(label)
        if weights.ndim == 1:
            return np.einsum("n,nd->d", weights, pts)
        return np.einsum("bn,nd->bd", weights, pts)

    def score_and_eps(self, x, t: float, label: Label = None) -> ScoreEps:
        """Score (alpha ybar - x)/sigma^2 and noise prediction (x - alpha ybar)/sigma."""
        t = _check_time(t)
        sigma = float(self.schedule.sigma(t))
        if sigma == 0.0:
            raise DomainError("score is undefined at t=0 (sigma=0)")
        alpha = float(self.schedule.alpha(t))
        batch, single = self._as_batch(x)
        ybar = self.ybar(batch, t, label)
        residual = batch - alpha * ybar
        score = -residual / (sigma * sigma)
        eps = residual / sigma
        if single:
            return ScoreEps(score=score[0], eps=eps[0])
        return ScoreEps(score=score, eps=eps)

    def score_jacobian(self, x, t: float, label: Label = None) -> np.ndarray:
        """Analytic Jacobian of the score, (alpha^2/sigma^4) Cov_w(y) - I/sigma^2."""
        t = _check_time(t)
        sigma = float(self.schedule.sigma(t))
        if sigma == 0.0:
            raise DomainError("score is undefined at t=0 (sigma=0)")
        alpha = float(self.schedule.alpha(t))
        batch, single = self._as_batch(x)
        pts = self._points(label)
        weights = self.posterior_weights(batch, t, label)
        mean = np.einsum("bn,nd->bd", weights, pts)
        centered = pts[None, :, :] - mean[:, None, :]
        cov = np.einsum("bn,bni,bnj->bij", weights, centered, centered)
        var = sigma * sigma
        jac = (alpha * alpha / (var * var)) * cov - np.eye(self.training_set.d)[None] / var
        return jac[0] if single else jac

    def nearest_index(self, x, t: float, label: Label = None):
        """Global index of argmin_j |x - alpha_t y_j|; ties go to the lowest index."""
        t = _check_time(t)
        index = self.training_set.select(label)
        batch, single = self._as_batch(x)
        sq = self._sq_dist(batch, self.training_set.points[index], float(self.schedule.alpha(t)))
        nearest = index[np.argmin(sq, axis=1)]
        return int(nearest[0]) if single else nearest

    def log_density(
        self,
        which: Union[DensityKind, str],
        x_t,
        t: float,
        x_s=None,
        s: Optional[float] = None,
        label: Label = None,
    ):
        """
        Log of one of the four densities.

        Args:
            which: 'marginal' p(x_t, t), 'forward_cond' p(x_t | x_s),
                'reverse_exact' p(x_s | x_t) as the explicit mixture,
                'reverse_gauss' the Gaussian approximation with mean through ybar
            x_t: state at the later time t
            t: later time
            x_s: state at the earlier time s (all but 'marginal')
            s: earlier time (all but 'marginal')
            label: restrict the data distribution to one class

        Returns:
            float for a single state, array for a batch
        """
        which = DensityKind(which)
        t = _check_time(t)
        xt, single = self._as_batch(x_t)
        d = self.training_set.d

        if which is DensityKind.MARGINAL:
            sigma = float(self.schedule.sigma(t))
            if sigma == 0.0:
                raise DegenerateDensity("p(x, 0) is a sum of Diracs and has no density")
            pts = self._points(label)
            sq = self._sq_dist(xt, pts, float(self.schedule.alpha(t)))
            value = (
                logsumexp(-sq / (2.0 * sigma * sigma), axis=1)
                - math.log(pts.shape[0])
                + _gaussian_log_norm(d, sigma * sigma)
            )
            return float(value[0]) if single else value

        if x_s is None or s is None:
            raise DomainError(f"density '{which.value}' needs x_s and s")
        tr = self.schedule.transition(s, t)
        xs, single_s = self._as_batch(x_s)
        single = single and single_s

        if which is DensityKind.FORWARD_COND:
            var = tr.sigma_t_given_s ** 2
            diff = xt - tr.alpha_t_given_s * xs
            value = -np.einsum("bd,bd->b", diff, diff) / (2.0 * var) + _gaussian_log_norm(d, var)
            return float(value[0]) if single else value

        if tr.s <= 0.0:
            raise DomainError("reverse densities need s > 0 (sigma_s|t = 0 at s = 0)")
        var = tr.sigma_s_given_t ** 2
        coef_x = tr.alpha_t_given_s * tr.sigma_s ** 2 / tr.sigma_t ** 2
        coef_y = tr.alpha_s * tr.sigma_t_given_s ** 2 / tr.sigma_t ** 2
        base = xs - coef_x * xt

        if which is DensityKind.REVERSE_GAUSS:
            diff = base - coef_y * self.ybar(xt, t, label)
            value = -np.einsum("bd,bd->b", diff, diff) / (2.0 * var) + _gaussian_log_norm(d, var)
            return float(value[0]) if single else value

        pts = self._points(label)
        sigma_t = tr.sigma_t
        log_w = -self._sq_dist(xt, pts, tr.alpha_t) / (2.0 * sigma_t * sigma_t)
        log_w = log_w - logsumexp(log_w, axis=1, keepdims=True)
        comp = self._sq_dist(base, pts, coef_y)
        value = logsumexp(log_w - comp / (2.0 * var), axis=1) + _gaussian_log_norm(d, var)
        return float(value[0]) if single else value
