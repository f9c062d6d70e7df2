"""
Ranking features with ReliefF
=============================

Both ReliefF readings, on a set where one column separates the classes and
nine are noise.
"""

import numpy as np

from chd.data import make_informative_noise
from chd.relief import relieff_knn, relieff_literal, select_top

data = make_informative_noise(n=200, seed=0)

###############################################################################
# The nearest-neighbour reading averages over the k closest hits and misses.

knn = relieff_knn(data, m=200, k=10, seed=0)
print(knn.to_text())

###############################################################################
# The literal reading draws one random hit and one random miss per focal
# record.  It is noisier, but the informative column still comes out on top.

literal = relieff_literal(data, m=200, seed=0)
print(select_top(literal, 3))

###############################################################################
# Multiplying a column by a positive constant changes nothing: numeric
# differences are range-normalised first.

X = data.X.copy()
X[:, 0] *= 1000.0
scaled = type(data).from_arrays(X, data.y, data.schema.names)
print(np.array_equal(relieff_knn(scaled, m=200, k=10, seed=0).weights, knn.weights))
