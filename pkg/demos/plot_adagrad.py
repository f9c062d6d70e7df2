"""
Adagrad on a quadratic bowl
===========================

Per-coordinate step sizes shrink as squared gradients accumulate.
"""

import numpy as np

from chd.optim import AdagradState, adagrad_step, format_trace, minimize

###############################################################################
# One step from theta = 1 on f = theta^2 moves almost exactly alpha.

theta, state = adagrad_step(AdagradState(alpha=0.1), np.array([1.0]), np.array([2.0]))
print(theta, state.s)

###############################################################################
# With a badly scaled bowl both coordinates still make progress at the same
# rate, because each is normalised by its own gradient history.

A = np.array([100.0, 0.01])
theta, trace, _ = minimize(lambda t: (0.5 * float(t @ (A * t)), A * t), np.array([1.0, 1.0]), 50)
print(theta)
print(format_trace(trace[:5]), end="")
