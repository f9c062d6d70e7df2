"""Adagrad and plain gradient descent.

The Adagrad update divides by ``sqrt(s) + delta`` (stabiliser outside the
square root)::

    s     <- s + g * g
    step  <- -alpha * g / (sqrt(s) + delta)
    theta <- theta + step
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

GradOracle = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
"""Maps a parameter vector to ``(loss, gradient)`` with matching arity."""


@dataclass(frozen=True)
class AdagradState:
    s: np.ndarray | None = None
    alpha: float = 0.1
    delta: float = 1e-8
    t: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.delta >= 0:
            raise ParameterError(f"delta must be non-negative, got {self.delta}")
        if self.s is not None:
            s = np.array(self.s, dtype=np.float64)
            if (s < 0).any():
                raise ParameterError("accumulator must be non-negative")
            s.setflags(write=False)
            object.__setattr__(self, "s", s)


def _as_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim > 1:
        raise ShapeError(f"{name} must be a vector, got shape {a.shape}")
    return np.atleast_1d(a)


def _check_finite(g: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericError("non-finite gradient component", int(bad[0]))


def adagrad_step(state: AdagradState, theta, g) -> tuple[np.ndarray, AdagradState]:
    """One Adagrad update; returns the new parameters and a new state."""
    theta = _as_vector(theta, "theta")
    g = _as_vector(g, "gradient")
    if theta.shape != g.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match parameters {theta.shape}")
    _check_finite(g)
    s = np.zeros_like(theta) if state.s is None else state.s
    if s.shape != theta.shape:
        raise ShapeError(f"accumulator shape {s.shape} does not match parameters {theta.shape}")
    s = s + g * g
    step = -state.alpha * g / (np.sqrt(s) + state.delta)
    return theta + step, replace(state, s=s, t=state.t + 1)


def sgd_step(theta, g, alpha: float = 0.1) -> np.ndarray:
    theta = _as_vector(theta, "theta")
    g = _as_vector(g, "gradient")
    if theta.shape != g.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match parameters {theta.shape}")
    _check_finite(g)
    return theta - alpha * g


def minimize(oracle: GradOracle, theta0, steps: int, state0: AdagradState | None = None,
             tol: float | None = None) -> tuple[np.ndarray, list[float], AdagradState]:
    """Run Adagrad for ``steps`` iterations.

    The trace holds the loss evaluated at the start of each step.  With
    ``tol`` set, iteration stops early once the relative change between
    consecutive losses falls below it.

    Returns:
        (theta, trace, state) after the last update.
    """
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    state = state0 if state0 is not None else AdagradState()
    theta = _as_vector(theta0, "theta0").copy()
    trace: list[float] = []
    for _ in range(steps):
        loss, g = oracle(theta)
        loss = float(loss)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at step {state.t + 1}")
        trace.append(loss)
        theta, state = adagrad_step(state, theta, g)
        if tol is not None and len(trace) > 1:
            prev = trace[-2]
            if abs(prev - loss) <= tol * max(abs(prev), np.finfo(float).tiny):
                break
    return theta, trace, state


def format_trace(trace) -> str:
    """Two-column ``step loss`` text, steps counted from 1."""
    return "".join(f"{i} {float(v)!r}\n" for i, v in enumerate(trace, start=1))
