"""Multilayer perceptron: one hidden layer, sigmoid output, Adagrad training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import DivergedError, NumericError, ParameterError
from ..optim import AdagradState, minimize
from .base import Encoder, Model, as_batch, check_trainable, sigmoid

ACTIVATIONS = ("relu", "sigmoid")


@dataclass(frozen=True)
class MlpConfig:
    hidden_width: int = 16
    activation: str = "relu"
    epochs: int = 2000
    alpha: float = 0.1
    delta: float = 1e-8
    tol: float | None = 1e-8
    seed: int = 0


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else sigmoid(z)


def _act_grad(name, z, a):
    return (z > 0).astype(np.float64) if name == "relu" else a * (1.0 - a)


class MlpModel(Model):
    """Layers are ``(W, b, activation)`` with ``W`` of shape ``(fan_out, fan_in)``."""

    kind = "multilayer_perceptron"

    def __init__(self, layers, encoder: Encoder, config: MlpConfig, loss_trace=()):
        self.layers = [(np.asarray(W, float), np.asarray(b, float), act) for W, b, act in layers]
        for (W1, _, _), (W2, _, _) in zip(self.layers, self.layers[1:]):
            if W2.shape[1] != W1.shape[0]:
                raise ParameterError("layer dimensions do not chain")
        self.encoder = encoder
        self.config = config
        self.loss_trace = list(loss_trace)
        self.n_features = encoder.n_inputs

    def predict_proba(self, X):
        X, single = as_batch(X, self.n_features)
        a = self.encoder.transform(X)
        for W, b, act in self.layers:
            a = _act(act, a @ W.T + b)
        p = a[:, 0]
        return float(p[0]) if single else p


def layer_shapes(n_in: int, width: int) -> list[tuple[int, int]]:
    return [(width, n_in), (1, width)]


def unpack(theta: np.ndarray, shapes) -> list[tuple[np.ndarray, np.ndarray]]:
    out, pos = [], 0
    for fan_out, fan_in in shapes:
        W = theta[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = theta[pos:pos + fan_out]
        pos += fan_out
        out.append((W, b))
    return out


def pack(params) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def mlp_loss_grad(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, shapes,
                  hidden: str = "relu"):
    """Mean cross-entropy of the network and its gradient by backpropagation."""
    params = unpack(theta, shapes)
    acts = [hidden] * (len(params) - 1) + ["sigmoid"]
    inputs, pre, post = [], [], []
    a = Z
    for (W, b), act in zip(params, acts):
        inputs.append(a)
        z = a @ W.T + b
        a = _act(act, z)
        pre.append(z)
        post.append(a)
    logit = pre[-1][:, 0]
    loss = np.mean(np.logaddexp(0.0, logit) - y * logit)

    grads = [None] * len(params)
    delta = ((post[-1][:, 0] - y) / len(y))[:, None]
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
        if i:
            back = delta @ W
            delta = back * _act_grad(acts[i - 1], pre[i - 1], post[i - 1])
    return float(loss), pack(grads)


def init_params(n_in: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-r, r) weights with ``r = sqrt(6 / (fan_in + fan_out))``; zero biases."""
    params = []
    for fan_out, fan_in in layer_shapes(n_in, width):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-r, r, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return pack(params)


def fit_mlp(train: Dataset, config: MlpConfig | None = None) -> MlpModel:
    cfg = config or MlpConfig()
    if cfg.hidden_width < 1:
        raise ParameterError("hidden_width must be at least 1")
    if cfg.activation not in ACTIVATIONS:
        raise ParameterError(f"activation must be one of {ACTIVATIONS}")
    check_trainable(train)
    enc = Encoder.fit(train)
    Z, y = enc.transform(train.X), train.y.astype(np.float64)
    shapes = layer_shapes(Z.shape[1], cfg.hidden_width)
    theta0 = init_params(Z.shape[1], cfg.hidden_width, np.random.default_rng(cfg.seed))
    state = AdagradState(alpha=cfg.alpha, delta=cfg.delta)
    try:
        theta, trace, _ = minimize(
            lambda t: mlp_loss_grad(t, Z, y, shapes, cfg.activation),
            theta0, cfg.epochs, state, tol=cfg.tol,
        )
    except NumericError as exc:
        raise DivergedError(f"training diverged ({exc}); try a smaller alpha") from exc
    (W1, b1), (W2, b2) = unpack(theta, shapes)
    layers = [(W1, b1, cfg.activation), (W2, b2, "sigmoid")]
    return MlpModel(layers, enc, cfg, trace)
