"""ReliefF feature weighting.

Two neighbour rules are provided.  :func:`relieff_literal` draws the hit and
the miss uniformly at random from the focal record's own class and from the
other class; :func:`relieff_knn` uses the ``k`` nearest hits and misses under
the summed per-feature difference.  Both accumulate ``diff(miss) - diff(hit)``
per feature, so relevant features end up with large positive weights, and
both divide by the number of focal samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .errors import ParameterError, SelectionError

# Numeric columns are snapped to this grid of their range before differencing.
# Differences and their sums are then exact in float64, which keeps weights
# bit-identical when a column is multiplied by a positive constant.  Each
# difference moves by at most 2**-24 relative to unsnapped arithmetic.
RESOLUTION = 2.0**-24


@dataclass(frozen=True)
class FeatureWeights:
    names: tuple[str, ...]
    weights: np.ndarray
    m: int
    k: int
    seed: int | None
    method: str

    def ranking(self) -> list[int]:
        """Feature indices by descending weight, ties to the lower index."""
        return sorted(range(len(self.weights)), key=lambda j: (-self.weights[j], j))

    def to_text(self) -> str:
        width = max([len("feature")] + [len(n) for n in self.names])
        lines = [f"{'feature':<{width}}  weight"]
        for j in self.ranking():
            lines.append(f"{self.names[j]:<{width}}  {float(self.weights[j])!r}")
        return "\n".join(lines) + "\n"


class DiffMetric:
    """Per-feature difference scaled into [0, 1].

    Numeric features use ``|a - b| / (max - min)`` over the dataset (0 for a
    constant column); categorical features use 0 when equal and 1 otherwise.
    Normalised numeric values are rounded to multiples of ``resolution``;
    ``None`` keeps them unrounded.
    """

    def __init__(self, X: np.ndarray, categorical: np.ndarray,
                 resolution: float | None = RESOLUTION):
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise SelectionError("ReliefF needs a dataset without missing values; clean it first")
        self.categorical = np.asarray(categorical, dtype=bool)
        self.resolution = resolution
        self.low = X.min(axis=0) if len(X) else np.zeros(X.shape[1])
        self.high = X.max(axis=0) if len(X) else np.zeros(X.shape[1])
        self.values = self._normalise(X)

    def _normalise(self, X: np.ndarray) -> np.ndarray:
        span = self.high - self.low
        safe = np.where(span > 0, span, 1.0)
        U = (X - self.low) / safe
        if self.resolution is not None:
            U = np.round(U / self.resolution) * self.resolution
        U = np.where(span > 0, U, 0.0)
        return np.where(self.categorical, X, U)

    def between(self, i: int, j) -> np.ndarray:
        """Per-feature differences between record ``i`` and record(s) ``j``."""
        a, b = self.values[i], self.values[j]
        return np.where(self.categorical, (a != b).astype(np.float64), np.abs(a - b))

    def distances(self, i: int) -> np.ndarray:
        """Total difference from record ``i`` to every record."""
        return self.between(i, slice(None)).sum(axis=-1)


def _check_classes(y: np.ndarray, minimum: int) -> None:
    for label in (0, 1):
        size = int(np.sum(y == label))
        if size == 0:
            raise SelectionError("ReliefF needs records from both classes")
        if size < minimum:
            raise SelectionError(f"class {label} has {size} record(s); need at least {minimum}")


def _focal_sequence(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    # Successive permutations: m == n visits every record exactly once.
    reps = -(-m // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:m]


def relieff_literal(dataset: Dataset, m: int | None = None, seed: int = 0, *,
                    triples: Iterable[tuple[int, int, int]] | None = None,
                    resolution: float | None = RESOLUTION) -> FeatureWeights:
    """Random-hit / random-miss Relief.

    For each focal record a second record of the same class and one of the
    other class are drawn uniformly.  ``triples`` replaces the generator with
    explicit ``(focal, hit, miss)`` index triples; ``m`` then becomes their
    count.  ``resolution`` is passed to :class:`DiffMetric`.
    """
    y = dataset.y
    metric = DiffMetric(dataset.X, dataset.categorical_mask, resolution)
    weights = np.zeros(len(dataset.feature_names))

    if triples is None:
        _check_classes(y, 2)
        m = len(dataset) if m is None else m
        if m < 1:
            raise ParameterError("m must be at least 1")
        rng = np.random.default_rng(seed)
        members = {label: np.flatnonzero(y == label) for label in (0, 1)}
        for focal in _focal_sequence(len(dataset), m, rng):
            same = members[y[focal]]
            same = same[same != focal]
            other = members[1 - y[focal]]
            hit = same[rng.integers(len(same))]
            miss = other[rng.integers(len(other))]
            weights += metric.between(focal, miss) - metric.between(focal, hit)
    else:
        m = 0
        for focal, hit, miss in triples:
            if y[hit] != y[focal] or y[miss] == y[focal] or hit == focal:
                raise ParameterError(f"invalid triple {(focal, hit, miss)}")
            weights += metric.between(focal, miss) - metric.between(focal, hit)
            m += 1
        if m == 0:
            raise ParameterError("no triples given")
        seed = None
    return FeatureWeights(dataset.feature_names, weights / m, m, 1, seed, "literal")


def relieff_knn(dataset: Dataset, m: int | None = None, k: int = 10,
                seed: int = 0, *, resolution: float | None = RESOLUTION) -> FeatureWeights:
    """ReliefF with the ``k`` nearest hits and misses of each focal record.

    Neighbour contributions are averaged over ``k``.  Distance ties go to the
    lower record index.
    """
    y = dataset.y
    if k < 1:
        raise ParameterError("k must be at least 1")
    for label in (0, 1):
        size = int(np.sum(y == label))
        if size == 0:
            raise SelectionError("ReliefF needs records from both classes")
        if size <= k:
            raise ParameterError(f"k={k} must be smaller than the size of class {label} ({size})")
    m = len(dataset) if m is None else m
    if m < 1:
        raise ParameterError("m must be at least 1")

    metric = DiffMetric(dataset.X, dataset.categorical_mask, resolution)
    rng = np.random.default_rng(seed)
    weights = np.zeros(len(dataset.feature_names))
    for focal in _focal_sequence(len(dataset), m, rng):
        dist = metric.distances(focal)
        order = np.argsort(dist, kind="stable")
        same = y[order] == y[focal]
        hits = order[same & (order != focal)][:k]
        misses = order[~same][:k]
        weights += metric.between(focal, misses).mean(axis=0)
        weights -= metric.between(focal, hits).mean(axis=0)
    return FeatureWeights(dataset.feature_names, weights / m, m, k, seed, "knn")


def select_top(weights: FeatureWeights, n: int) -> list[str]:
    """Names of the ``n`` highest-weighted features."""
    if not 1 <= n <= len(weights.names):
        raise ParameterError(f"n must lie in [1, {len(weights.names)}], got {n}")
    return [weights.names[j] for j in weights.ranking()[:n]]


def select_top_indices(weights: FeatureWeights, n: int) -> list[int]:
    if not 1 <= n <= len(weights.names):
        raise ParameterError(f"n must lie in [1, {len(weights.names)}], got {n}")
    return weights.ranking()[:n]
