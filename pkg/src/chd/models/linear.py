"""Logistic regression and linear SVM trained with full-batch Adagrad."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import Dataset
from ..errors import DivergedError, NumericError, ParameterError
from ..optim import AdagradState, minimize
from .base import Encoder, Model, as_batch, check_trainable, sigmoid


@dataclass(frozen=True)
class LogisticConfig:
    epochs: int = 500
    alpha: float = 0.1
    delta: float = 1e-8
    tol: float | None = 1e-8
    seed: int = 0


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-3
    epochs: int = 500
    alpha: float = 0.1
    delta: float = 1e-8
    tol: float | None = 1e-8
    seed: int = 0


def logistic_loss_grad(params: np.ndarray, Z: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and its gradient; ``params = [w..., b]``."""
    w, b = params[:-1], params[-1]
    z = Z @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    r = (sigmoid(z) - y) / len(y)
    return float(loss), np.append(Z.T @ r, r.sum())


def svm_loss_grad(params: np.ndarray, Z: np.ndarray, y: np.ndarray, lam: float):
    """``lam/2 * |w|^2 + mean(max(0, 1 - s * f(x)))`` with ``s = 2y - 1``.

    At the hinge kink the subgradient 0 is used.
    """
    w, b = params[:-1], params[-1]
    s = 2.0 * y - 1.0
    margin = 1.0 - s * (Z @ w + b)
    active = margin > 0
    loss = 0.5 * lam * (w @ w) + np.mean(np.where(active, margin, 0.0))
    coef = np.where(active, -s, 0.0) / len(y)
    return float(loss), np.append(lam * w + Z.T @ coef, coef.sum())


def _train(oracle, n_params, cfg):
    state = AdagradState(alpha=cfg.alpha, delta=cfg.delta)
    try:
        theta, trace, _ = minimize(oracle, np.zeros(n_params), cfg.epochs, state, tol=cfg.tol)
    except NumericError as exc:
        raise DivergedError(f"training diverged ({exc}); try a smaller alpha") from exc
    return theta, trace


class LogisticModel(Model):
    kind = "logistic_regression"

    def __init__(self, weights, bias, encoder: Encoder, config: LogisticConfig, loss_trace=()):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.encoder = encoder
        self.config = config
        self.loss_trace = list(loss_trace)
        self.n_features = encoder.n_inputs

    def decision_function(self, X):
        X, single = as_batch(X, self.n_features)
        z = self.encoder.transform(X) @ self.weights + self.bias
        return float(z[0]) if single else z

    def predict_proba(self, X):
        z = self.decision_function(X)
        p = sigmoid(np.atleast_1d(z))
        return float(p[0]) if np.ndim(z) == 0 else p


def fit_logistic(train: Dataset, config: LogisticConfig | None = None) -> LogisticModel:
    cfg = config or LogisticConfig()
    check_trainable(train)
    enc = Encoder.fit(train)
    Z, y = enc.transform(train.X), train.y.astype(np.float64)
    theta, trace = _train(lambda t: logistic_loss_grad(t, Z, y), Z.shape[1] + 1, cfg)
    return LogisticModel(theta[:-1], theta[-1], enc, cfg, trace)


class LinearSvmModel(Model):
    """Linear max-margin classifier.

    ``predict_proba`` squashes the decision value through a sigmoid so that it
    shares the 0.5 threshold of the other models; it is not calibrated.
    """

    kind = "svm"

    def __init__(self, weights, bias, encoder: Encoder, config: SvmConfig, loss_trace=()):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.encoder = encoder
        self.config = config
        self.loss_trace = list(loss_trace)
        self.n_features = encoder.n_inputs

    @property
    def lam(self) -> float:
        return self.config.lam

    def decision_function(self, X):
        X, single = as_batch(X, self.n_features)
        z = self.encoder.transform(X) @ self.weights + self.bias
        return float(z[0]) if single else z

    def predict_proba(self, X):
        z = self.decision_function(X)
        p = sigmoid(np.atleast_1d(z))
        return float(p[0]) if np.ndim(z) == 0 else p


def fit_svm(train: Dataset, config: SvmConfig | None = None) -> LinearSvmModel:
    cfg = config or SvmConfig()
    if not cfg.lam >= 0:
        raise ParameterError("lam must be non-negative")
    check_trainable(train)
    enc = Encoder.fit(train)
    Z, y = enc.transform(train.X), train.y.astype(np.float64)
    theta, trace = _train(lambda t: svm_loss_grad(t, Z, y, cfg.lam), Z.shape[1] + 1, cfg)
    return LinearSvmModel(theta[:-1], theta[-1], enc, cfg, trace)


def config_dict(cfg) -> dict:
    return asdict(cfg)
