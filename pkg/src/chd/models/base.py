"""Shared model plumbing: input checking, the encoder, and the predict API."""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..errors import ParameterError, ShapeError

STD_FLOOR = 1e-12


def check_trainable(train: Dataset) -> None:
    if len(train) == 0:
        raise ParameterError("training set is empty")
    if np.isnan(train.X).any():
        raise ParameterError("training set has missing values; clean it first")
    counts = np.bincount(train.y, minlength=2)
    if (counts == 0).any():
        raise ParameterError("training set must contain both classes")


def as_batch(X, n_features: int) -> tuple[np.ndarray, bool]:
    """Return a 2-D float view of ``X`` and whether the input was a single record."""
    if isinstance(X, Dataset):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"expected {n_features} features per record, got shape {np.shape(X)}")
    return X, single


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Encoder:
    """One-hot for categoricals, standardisation for numerics.

    Statistics come from the training matrix only.  Categorical columns
    expand to one indicator per declared level, in column order.
    """

    def __init__(self, categorical, n_levels, mean, std):
        self.categorical = np.asarray(categorical, dtype=bool)
        self.n_levels = np.asarray(n_levels, dtype=np.int64)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, train: Dataset) -> "Encoder":
        X = train.X
        categorical = train.categorical_mask
        n_levels = [len(f.levels) if f.is_categorical else 0 for f in train.schema.features]
        mean = np.where(categorical, 0.0, X.mean(axis=0))
        std = np.where(categorical, 1.0, np.maximum(X.std(axis=0), STD_FLOOR))
        return cls(categorical, n_levels, mean, std)

    @property
    def n_inputs(self) -> int:
        return len(self.categorical)

    @property
    def n_outputs(self) -> int:
        return int(np.sum(np.where(self.categorical, self.n_levels, 1)))

    def transform(self, X) -> np.ndarray:
        X, _ = as_batch(X, self.n_inputs)
        blocks = []
        for j in range(self.n_inputs):
            col = X[:, j]
            if self.categorical[j]:
                codes = col.astype(np.int64)
                onehot = np.zeros((len(col), self.n_levels[j]))
                valid = (codes >= 0) & (codes < self.n_levels[j])
                onehot[np.flatnonzero(valid), codes[valid]] = 1.0
                blocks.append(onehot)
            else:
                blocks.append(((col - self.mean[j]) / self.std[j])[:, None])
        return np.hstack(blocks) if blocks else np.zeros((len(X), 0))

    def group(self, Z) -> np.ndarray:
        """Invert :meth:`transform`: collapse indicators back into level codes."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        out = np.empty((len(Z), self.n_inputs))
        pos = 0
        for j in range(self.n_inputs):
            if self.categorical[j]:
                width = int(self.n_levels[j])
                out[:, j] = np.argmax(Z[:, pos:pos + width], axis=1)
                pos += width
            else:
                out[:, j] = Z[:, pos] * self.std[j] + self.mean[j]
                pos += 1
        return out

    def to_dict(self) -> dict:
        return {
            "categorical": self.categorical.tolist(),
            "n_levels": self.n_levels.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        return cls(d["categorical"], d["n_levels"], d["mean"], d["std"])


class Model:
    """Binary classifier over raw (coded) feature rows."""

    kind = "model"
    n_features: int

    def predict_proba(self, X):
        raise NotImplementedError

    def predict(self, X, threshold: float = 0.5):
        """Label 1 iff the positive-class probability is at least ``threshold``."""
        p = np.asarray(self.predict_proba(X))
        labels = (p >= threshold).astype(np.int64)
        return int(labels) if labels.ndim == 0 else labels


def predict_proba(model: Model, X):
    return model.predict_proba(X)


def predict(model: Model, X, threshold: float = 0.5):
    return model.predict(X, threshold)
