"""Online benchmarking and the latency / confidence metric models.

Both models follow the scikit-learn estimator protocol: constructor
arguments are hyper-parameters, ``fit`` learns trailing-underscore
attributes and returns ``self``, and ``get_params``/``clone`` work as usual.
``X`` is always a column (or 1-d array) of path counts.

* :class:`LatencyModel`: ``latency(n) = setup_s + n / rate``
* :class:`ConfidenceModel`: ``ci(n) = k / sqrt(n)`` with ``k = z * sample_std``
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DegenerateModelError, InfeasibleError, ValidationError
from .mcengine import Z_95, sample_variance

__all__ = [
    "BenchmarkObservation",
    "LatencyModel",
    "ConfidenceModel",
    "benchmark",
    "fit_latency",
    "fit_confidence",
    "predict_latency",
    "required_paths",
    "BENCHMARK_CHUNK_BASE",
    "DEFAULT_SIZES",
]

DEFAULT_SIZES = (1 << 14, 1 << 16)
# benchmark chunks live above this index so production ranges start at 0
BENCHMARK_CHUNK_BASE = 1 << 63
_SIZE_STRIDE = 1 << 32
MAX_PATHS = (1 << 63) - 1


@dataclass(frozen=True)
class BenchmarkObservation:
    n: int
    elapsed_s: float
    sample_std: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("benchmark observations need n >= 2")
        if self.elapsed_s < 0 or self.sample_std < 0:
            raise ValueError("elapsed_s and sample_std must be >= 0")

    def to_dict(self) -> dict:
        return {"n": self.n, "elapsed_s": self.elapsed_s, "sample_std": self.sample_std}


def _counts(X):
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("X must hold a single column of path counts")
        X = X[:, 0]
    return X


class LatencyModel(RegressorMixin, BaseEstimator):
    """Affine wall-time model fitted by least squares.

    Parameters
    ----------
    clamp_setup : bool, default=True
        Refit through the origin when the free intercept comes out negative,
        which happens with timing noise on fast platforms.
    """

    def __init__(self, clamp_setup=True):
        self.clamp_setup = clamp_setup

    @classmethod
    def from_params(cls, setup_s: float, rate: float) -> "LatencyModel":
        if rate <= 0 or setup_s < 0:
            raise ValueError("need rate > 0 and setup_s >= 0")
        model = cls()
        model.setup_s_ = float(setup_s)
        model.rate_ = float(rate)
        model.n_features_in_ = 1
        return model

    def fit(self, X, y):
        X = _counts(X)
        X, y = check_X_y(X.reshape(-1, 1), y, y_numeric=True)
        n = X[:, 0]
        if np.unique(n).size < 2:
            raise ValueError("latency fit needs at least two distinct path counts")
        n_mean, y_mean = n.mean(), y.mean()
        dn = n - n_mean
        slope = float(np.dot(dn, y - y_mean) / np.dot(dn, dn))
        intercept = float(y_mean - slope * n_mean)
        if intercept < 0 and self.clamp_setup:
            intercept = 0.0
            slope = float(np.dot(n, y) / np.dot(n, n))
        if slope <= 0:
            raise DegenerateModelError(f"fitted per-path cost {slope!r} is not positive")
        self.setup_s_ = intercept
        self.rate_ = 1.0 / slope
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, ("setup_s_", "rate_"))
        return self.setup_s_ + _counts(X) / self.rate_

    def latency(self, n: float) -> float:
        check_is_fitted(self, ("setup_s_", "rate_"))
        return self.setup_s_ + n / self.rate_


class ConfidenceModel(BaseEstimator):
    """95% CI half-width as a function of path count.

    ``fit`` takes the largest-``n`` observation as the most reliable
    estimate of the payoff standard deviation.
    """

    def __init__(self, z=Z_95):
        self.z = z

    @classmethod
    def from_k(cls, k: float, z: float = Z_95) -> "ConfidenceModel":
        if k < 0:
            raise ValueError("k must be >= 0")
        model = cls(z=z)
        model.k_ = float(k)
        model.sample_std_ = float(k) / z
        model.n_features_in_ = 1
        return model

    def fit(self, X, y):
        X = _counts(X)
        X, y = check_X_y(X.reshape(-1, 1), y, y_numeric=True)
        if (X[:, 0] < 2).any() or (y < 0).any():
            raise ValueError("need n >= 2 and sample_std >= 0")
        best = int(np.argmax(X[:, 0]))
        self.sample_std_ = float(y[best])
        self.k_ = self.z * self.sample_std_
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "k_")
        return self.k_ / np.sqrt(_counts(X))

    def required_paths(self, ci_target: float) -> int:
        """Smallest path count whose predicted CI is within ``ci_target`` (at least 2)."""
        check_is_fitted(self, "k_")
        if not ci_target > 0:
            raise ValidationError(f"must be > 0, got {ci_target!r}", field="ci_target")
        if self.k_ == 0:
            return 2
        ratio = self.k_ / ci_target
        if not math.isfinite(ratio) or ratio * ratio > MAX_PATHS:
            raise InfeasibleError(f"ci target {ci_target!r} needs more than {MAX_PATHS} paths")
        n = max(2, math.ceil(ratio * ratio))
        # float rounding can leave ci(n) a hair above the target
        while self.k_ / math.sqrt(n) > ci_target:
            n += 1
        return n


# --- functional API --------------------------------------------------------


def benchmark(platform, task, sizes=DEFAULT_SIZES, repeats: int = 1):
    """Run ``task`` at each size on ``platform`` using reserved chunk indices.

    Wall-clock platforms get a tiny warm-up first and report the median of
    ``repeats`` timings; the numerics are identical across repeats.
    """
    sizes = [int(s) for s in sizes]
    if len(set(sizes)) < 2 or min(sizes) < 2:
        raise ValueError("benchmark needs at least two distinct sizes, each >= 2")
    if getattr(platform, "clock", "wall") == "wall":
        platform.execute(task, 2, BENCHMARK_CHUNK_BASE - 1)
    out = []
    for i, size in enumerate(sizes):
        first = BENCHMARK_CHUNK_BASE + i * _SIZE_STRIDE
        runs = [platform.execute(task, size, first) for _ in range(max(1, repeats))]
        elapsed = statistics.median(r.elapsed_s for r in runs)
        std = math.sqrt(sample_variance(runs[0]))
        out.append(BenchmarkObservation(size, elapsed, std))
    return out


def fit_latency(obs) -> LatencyModel:
    obs = list(obs)
    return LatencyModel().fit([o.n for o in obs], [o.elapsed_s for o in obs])


def fit_confidence(obs) -> ConfidenceModel:
    if isinstance(obs, BenchmarkObservation):
        obs = [obs]
    obs = list(obs)
    return ConfidenceModel().fit([o.n for o in obs], [o.sample_std for o in obs])


def predict_latency(model: LatencyModel, n: float) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    return model.latency(n)


def required_paths(model: ConfidenceModel, ci_target: float) -> int:
    return model.required_paths(ci_target)
