"""CART trees, random forests and logistic-loss gradient boosting.

Trees consume raw coded features.  Numeric splits send ``x <= threshold``
left, thresholds being midpoints between consecutive distinct values.
Categorical splits send a subset of level codes left; the subset is a prefix
of the levels ordered by their mean target, which is the optimal binary
partition for a two-class or squared-error criterion.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..data import Dataset
from ..errors import ParameterError
from .base import Model, as_batch, check_trainable, sigmoid

_GAIN_EPS = 1e-12
DENOM_FLOOR = 1e-12


@dataclass
class TreeNode:
    """Leaf when ``feature`` is None.

    Classification leaves store ``value = (p0, p1)``; regression leaves store
    a scalar score.
    """

    feature: Optional[int] = None
    threshold: Optional[float] = None
    categories: Optional[frozenset] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: object = None
    n_samples: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def goes_left(self, x: np.ndarray) -> np.ndarray:
        col = x[..., self.feature]
        if self.categories is not None:
            return np.isin(col, list(self.categories))
        return col <= self.threshold

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def n_leaves(self) -> int:
        return 1 if self.is_leaf else self.left.n_leaves() + self.right.n_leaves()

    def to_dict(self) -> dict:
        if self.is_leaf:
            value = list(self.value) if isinstance(self.value, tuple) else self.value
            return {"value": value, "n": self.n_samples}
        d = {"feature": self.feature, "n": self.n_samples,
             "left": self.left.to_dict(), "right": self.right.to_dict()}
        if self.categories is not None:
            d["categories"] = sorted(self.categories)
        else:
            d["threshold"] = self.threshold
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            value = tuple(d["value"]) if isinstance(d["value"], list) else d["value"]
            return cls(value=value, n_samples=d["n"])
        cats = d.get("categories")
        return cls(
            feature=d["feature"],
            threshold=d.get("threshold"),
            categories=None if cats is None else frozenset(float(c) for c in cats),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
            n_samples=d["n"],
        )


def apply_tree(root: TreeNode, X: np.ndarray) -> list:
    """Leaf value reached by every row of ``X``."""
    out = [None] * len(X)

    def walk(node, idx):
        if node.is_leaf:
            for i in idx:
                out[i] = node.value
            return
        mask = node.goes_left(X[idx])
        walk(node.left, idx[mask])
        walk(node.right, idx[~mask])

    walk(root, np.arange(len(X)))
    return out


# ----------------------------------------------------------------------------
# split search


class _Criterion:
    """Impurity bookkeeping for a node's samples, expressed as (sum, sum_sq) stats."""

    def __init__(self, target: np.ndarray, classification: bool):
        self.target = target
        self.classification = classification

    def cost(self, s, s2, n):
        # total impurity of a group of n samples (n * gini, or sum of squared errors)
        if self.classification:
            p = s / n
            return n * 2.0 * p * (1.0 - p)
        return s2 - s * s / n


def _best_numeric(x, t, crit, min_leaf, parent_cost):
    order = np.argsort(x, kind="stable")
    xs, ts = x[order], t[order]
    n = len(xs)
    cs = np.cumsum(ts)[:-1]
    cs2 = np.cumsum(ts * ts)[:-1]
    nl = np.arange(1, n)
    nr = n - nl
    valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    tot, tot2 = ts.sum(), (ts * ts).sum()
    gain = parent_cost - crit.cost(cs, cs2, nl) - crit.cost(tot - cs, tot2 - cs2, nr)
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    i = int(np.flatnonzero(gain >= best - _GAIN_EPS)[0])
    a, b = xs[i], xs[i + 1]
    thr = a + (b - a) / 2.0
    if not a <= thr < b:
        thr = a
    return gain[i], thr, None


def _best_categorical(x, t, crit, min_leaf, parent_cost):
    levels = np.unique(x)
    if len(levels) < 2:
        return None
    n_lvl = np.array([np.sum(x == v) for v in levels])
    s_lvl = np.array([t[x == v].sum() for v in levels])
    s2_lvl = np.array([(t[x == v] ** 2).sum() for v in levels])
    order = np.lexsort((levels, s_lvl / n_lvl))
    levels, n_lvl, s_lvl, s2_lvl = levels[order], n_lvl[order], s_lvl[order], s2_lvl[order]
    nl = np.cumsum(n_lvl)[:-1]
    cs = np.cumsum(s_lvl)[:-1]
    cs2 = np.cumsum(s2_lvl)[:-1]
    n = n_lvl.sum()
    nr = n - nl
    valid = (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    gain = parent_cost - crit.cost(cs, cs2, nl) - crit.cost(s_lvl.sum() - cs, s2_lvl.sum() - cs2, nr)
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    i = int(np.flatnonzero(gain >= best - _GAIN_EPS)[0])
    return gain[i], None, frozenset(float(v) for v in levels[: i + 1])


@dataclass
class TreeParams:
    max_depth: int = 6
    min_leaf: int = 2
    max_features: Optional[int] = None


def build_tree(X: np.ndarray, target: np.ndarray, categorical: np.ndarray,
               params: TreeParams, classification: bool = True,
               leaf_value: Optional[Callable[[np.ndarray], object]] = None,
               rng: Optional[np.random.Generator] = None) -> TreeNode:
    """Greedy top-down CART.

    Splits maximise the decrease in Gini impurity (classification) or in
    squared error (regression).  Equal gains resolve to the lower feature
    index, then the lower threshold.  With ``max_features`` set, each split
    considers a random feature subset drawn from ``rng``.
    """
    if params.max_depth < 0 or params.min_leaf < 1:
        raise ParameterError("max_depth must be >= 0 and min_leaf >= 1")
    target = np.asarray(target, dtype=np.float64)
    crit = _Criterion(target, classification)
    p = X.shape[1]
    if leaf_value is None:
        def leaf_value(idx):
            p1 = float(target[idx].mean())
            return (1.0 - p1, p1)

    def grow(idx, depth):
        t = target[idx]
        node = TreeNode(n_samples=len(idx))
        pure = np.all(t == t[0])
        if pure or depth >= params.max_depth or len(idx) < 2 * params.min_leaf:
            node.value = leaf_value(idx)
            return node
        parent = crit.cost(t.sum(), (t * t).sum(), len(t))
        feats = range(p)
        if params.max_features is not None and params.max_features < p:
            feats = np.sort(rng.choice(p, size=params.max_features, replace=False))
        best = None
        for j in feats:
            finder = _best_categorical if categorical[j] else _best_numeric
            found = finder(X[idx, j], t, crit, params.min_leaf, parent)
            if found is not None and found[0] > _GAIN_EPS:
                if best is None or found[0] > best[0] + _GAIN_EPS:
                    best = (found[0], int(j), found[1], found[2])
        if best is None:
            node.value = leaf_value(idx)
            return node
        _, node.feature, node.threshold, node.categories = best
        mask = node.goes_left(X[idx])
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    return grow(np.arange(len(X)), 0)


# ----------------------------------------------------------------------------
# decision tree


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 6
    min_leaf: int = 2


class DecisionTreeModel(Model):
    kind = "decision_tree"

    def __init__(self, root: TreeNode, n_features: int, config: TreeConfig):
        self.root = root
        self.n_features = n_features
        self.config = config

    def predict_proba(self, X):
        X, single = as_batch(X, self.n_features)
        p = np.array([v[1] for v in apply_tree(self.root, X)])
        return float(p[0]) if single else p


def fit_tree(train: Dataset, config: TreeConfig | None = None) -> DecisionTreeModel:
    cfg = config or TreeConfig()
    if len(train) == 0:
        raise ParameterError("training set is empty")
    root = build_tree(train.X, train.y, train.categorical_mask,
                      TreeParams(cfg.max_depth, cfg.min_leaf))
    return DecisionTreeModel(root, train.X.shape[1], cfg)


# ----------------------------------------------------------------------------
# random forest


def worker_count() -> int:
    """Thread cap from ``CHD_THREADS`` (default 1). Results never depend on it."""
    try:
        return max(1, int(os.environ.get("CHD_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 6
    min_leaf: int = 2
    max_features: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0


class ForestModel(Model):
    """Majority vote of trees; probability is the fraction voting positive."""

    kind = "random_forest"

    def __init__(self, trees, tree_seeds, max_features: int, n_features: int, config: ForestConfig):
        if not trees:
            raise ParameterError("a forest needs at least one tree")
        self.trees = list(trees)
        self.tree_seeds = [int(s) for s in tree_seeds]
        self.max_features = int(max_features)
        self.n_features = n_features
        self.config = config

    def predict_proba(self, X):
        X, single = as_batch(X, self.n_features)
        votes = np.zeros(len(X))
        for tree in self.trees:
            votes += np.array([v[1] >= 0.5 for v in apply_tree(tree, X)], dtype=np.float64)
        p = votes / len(self.trees)
        return float(p[0]) if single else p


def default_max_features(p: int) -> int:
    return max(1, int(np.sqrt(p)))


def fit_forest(train: Dataset, config: ForestConfig | None = None) -> ForestModel:
    """Bagged CART trees with per-split feature subsampling.

    Every tree draws its bootstrap and feature subsets from its own generator
    seeded from ``config.seed``, so the forest is identical whatever the
    number of worker threads.
    """
    cfg = config or ForestConfig()
    if cfg.n_trees < 1:
        raise ParameterError("n_trees must be at least 1")
    if len(train) == 0:
        raise ParameterError("training set is empty")
    n, p = train.X.shape
    mf = cfg.max_features if cfg.max_features is not None else default_max_features(p)
    if not 1 <= mf <= p:
        raise ParameterError(f"max_features must lie in [1, {p}]")
    seeds = np.random.default_rng(cfg.seed).integers(0, 2**63 - 1, size=cfg.n_trees)
    params = TreeParams(cfg.max_depth, cfg.min_leaf, mf)
    categorical = train.categorical_mask

    def grow(tree_seed):
        rng = np.random.default_rng(int(tree_seed))
        rows = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        return build_tree(train.X[rows], train.y[rows], categorical, params, rng=rng)

    workers = min(worker_count(), cfg.n_trees)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(grow, seeds))
    else:
        trees = [grow(s) for s in seeds]
    return ForestModel(trees, seeds, mf, p, cfg)


# ----------------------------------------------------------------------------
# gradient boosting


@dataclass(frozen=True)
class GbtConfig:
    n_rounds: int = 100
    shrinkage: float = 0.1
    max_depth: int = 3
    min_leaf: int = 2


def logistic_loss(y: np.ndarray, score: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


class GbtModel(Model):
    """``p(x) = sigmoid(init + shrinkage * sum(tree(x)))``."""

    kind = "gradient_boosted_tree"

    def __init__(self, init_score: float, trees, shrinkage: float, n_features: int,
                 config: GbtConfig, loss_trace=()):
        self.init_score = float(init_score)
        self.trees = list(trees)
        self.shrinkage = float(shrinkage)
        self.n_features = n_features
        self.config = config
        self.loss_trace = list(loss_trace)

    def raw_score(self, X) -> np.ndarray:
        X, _ = as_batch(X, self.n_features)
        score = np.full(len(X), self.init_score)
        for tree in self.trees:
            score += self.shrinkage * np.array(apply_tree(tree, X), dtype=np.float64)
        return score

    def predict_proba(self, X):
        _, single = as_batch(X, self.n_features)
        p = sigmoid(self.raw_score(X))
        return float(p[0]) if single else p


def fit_gbt(train: Dataset, config: GbtConfig | None = None) -> GbtModel:
    """Boosting on the logistic loss with one Newton step per leaf.

    Each round fits a squared-error regression tree to the residuals
    ``y - sigmoid(score)``; a leaf's value is
    ``sum(residual) / max(sum(p * (1 - p)), 1e-12)`` over its samples.
    """
    cfg = config or GbtConfig()
    if cfg.n_rounds < 0:
        raise ParameterError("n_rounds must be non-negative")
    if not 0 < cfg.shrinkage <= 1:
        raise ParameterError("shrinkage must lie in (0, 1]")
    check_trainable(train)
    X, y = train.X, train.y.astype(np.float64)
    rate = y.mean()
    init = float(np.log(rate / (1.0 - rate)))
    score = np.full(len(y), init)
    params = TreeParams(cfg.max_depth, cfg.min_leaf)
    categorical = train.categorical_mask
    trees, trace = [], [logistic_loss(y, score)]
    for _ in range(cfg.n_rounds):
        prob = sigmoid(score)
        residual = y - prob
        hess = prob * (1.0 - prob)

        def newton(idx, residual=residual, hess=hess):
            return float(residual[idx].sum() / max(hess[idx].sum(), DENOM_FLOOR))

        tree = build_tree(X, residual, categorical, params, classification=False, leaf_value=newton)
        score = score + cfg.shrinkage * np.array(apply_tree(tree, X), dtype=np.float64)
        trees.append(tree)
        trace.append(logistic_loss(y, score))
    return GbtModel(init, trees, cfg.shrinkage, X.shape[1], cfg, trace)
