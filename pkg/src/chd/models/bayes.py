"""Naive Bayes with Gaussian numeric and multinomial categorical likelihoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..data import Dataset
from .base import Model, as_batch, check_trainable

VAR_FLOOR = 1e-9


@dataclass(frozen=True)
class NbConfig:
    smoothing: float = 1.0
    """Additive (Laplace) count added to every level of a categorical feature."""


class NaiveBayesModel(Model):
    kind = "naive_bayes"

    def __init__(self, priors, means, variances, cat_probs, categorical, config: NbConfig):
        self.priors = np.asarray(priors, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)          # (2, p)
        self.variances = np.asarray(variances, dtype=np.float64)  # (2, p)
        self.cat_probs = cat_probs  # {feature: (2, n_levels) array}
        self.categorical = np.asarray(categorical, dtype=bool)
        self.config = config
        self.n_features = len(self.categorical)

    def joint_log_likelihood(self, X) -> np.ndarray:
        X, _ = as_batch(X, self.n_features)
        out = np.tile(np.log(self.priors), (len(X), 1))
        for j in range(self.n_features):
            col = X[:, j]
            if self.categorical[j]:
                probs = self.cat_probs[j]
                codes = col.astype(np.int64)
                # codes outside the declared levels carry no evidence
                valid = (codes >= 0) & (codes < probs.shape[1])
                for c in (0, 1):
                    out[valid, c] += np.log(probs[c, codes[valid]])
            else:
                var = self.variances[:, j]
                diff = col[:, None] - self.means[:, j][None, :]
                out += -0.5 * np.log(2.0 * np.pi * var)[None, :] - diff**2 / (2.0 * var)[None, :]
        return out

    def predict_proba(self, X):
        _, single = as_batch(X, self.n_features)
        jll = self.joint_log_likelihood(X)
        p = np.exp(jll[:, 1] - logsumexp(jll, axis=1))
        return float(p[0]) if single else p


def fit_nb(train: Dataset, config: NbConfig | None = None) -> NaiveBayesModel:
    """Class priors are label frequencies; Gaussians use the per-class mean
    and maximum-likelihood variance, floored at 1e-9."""
    cfg = config or NbConfig()
    check_trainable(train)
    X, y = train.X, train.y
    categorical = train.categorical_mask
    p = X.shape[1]
    priors = np.bincount(y, minlength=2) / len(y)
    means = np.zeros((2, p))
    variances = np.ones((2, p))
    cat_probs = {}
    for j, spec in enumerate(train.schema.features):
        if categorical[j]:
            n_levels = len(spec.levels)
            table = np.zeros((2, n_levels))
            for c in (0, 1):
                counts = np.bincount(X[y == c, j].astype(np.int64), minlength=n_levels)
                table[c] = (counts + cfg.smoothing) / (counts.sum() + cfg.smoothing * n_levels)
            cat_probs[j] = table
        else:
            for c in (0, 1):
                col = X[y == c, j]
                means[c, j] = col.mean()
                variances[c, j] = max(col.var(), VAR_FLOOR)
    return NaiveBayesModel(priors, means, variances, cat_probs, categorical, cfg)
