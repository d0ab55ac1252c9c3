"""Random-forest regression surrogate and expected improvement.

Trees split on vectorized configurations by exact variance reduction over a
random subset of dimensions; forest mean and variance are the moments of the
per-tree predictions. Strictly positive losses are modeled in log space and
transformed back through log-normal moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import TooFewPoints


@dataclass
class TreeNode:
    dim: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    trees: list
    num_trees: int
    min_leaf: int
    log_space: bool
    rung: Optional[float] = None
    num_dims: int = 0


def _build_tree(X: np.ndarray, y: np.ndarray, min_leaf: int, rng) -> TreeNode:
    n, d = X.shape
    node = TreeNode(value=float(y.mean()))
    if n < 2 * min_leaf or np.ptp(y) == 0.0:
        return node
    n_try = max(1, int(np.ceil(0.8 * d)))
    dims = rng.choice(d, size=n_try, replace=False)
    best = None  # (sse, dim, threshold)
    for dim in dims:
        order = np.argsort(X[:, dim], kind="stable")
        xs = X[order, dim]
        ys = y[order]
        csum = np.cumsum(ys)
        csum2 = np.cumsum(ys * ys)
        total, total2 = csum[-1], csum2[-1]
        for k in range(min_leaf, n - min_leaf + 1):
            if xs[k - 1] == xs[k]:
                continue
            # products, not **2: libm pow is not correctly rounded and would
            # break the exactness of variance ratios under loss rescaling
            sse_l = csum2[k - 1] - csum[k - 1] * csum[k - 1] / k
            nr = n - k
            right = total - csum[k - 1]
            sse_r = (total2 - csum2[k - 1]) - right * right / nr
            sse = sse_l + sse_r
            if best is None or sse < best[0]:
                best = (sse, dim, 0.5 * (xs[k - 1] + xs[k]))
    if best is None:
        return node
    _, dim, threshold = best
    mask = X[:, dim] <= threshold
    node.dim = int(dim)
    node.threshold = float(threshold)
    node.left = _build_tree(X[mask], y[mask], min_leaf, rng)
    node.right = _build_tree(X[~mask], y[~mask], min_leaf, rng)
    return node


def fit_forest(X, y, num_trees: int = 50, min_leaf: int = 3, rng=None,
               bootstrap: bool = True, log_space: Optional[bool] = None,
               rung: Optional[float] = None) -> ForestModel:
    """Fit bootstrap regression trees; losses are fitted in log space when all
    positive (disable by passing ``log_space=False``)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) aligned with y")
    if len(X) < 2:
        raise TooFewPoints("need at least 2 observations")
    rng = rng if rng is not None else np.random.default_rng(0)
    if log_space is None:
        log_space = bool(np.all(y > 0))
    y_fit = np.log(y) if log_space else y
    trees = []
    n = len(X)
    for _ in range(num_trees):
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(_build_tree(X[idx], y_fit[idx], min_leaf, rng))
    return ForestModel(trees=trees, num_trees=num_trees, min_leaf=min_leaf,
                       log_space=log_space, rung=rung, num_dims=X.shape[1])


def _tree_predict(node: TreeNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if x[node.dim] <= node.threshold else node.right
    return node.value


def predict_forest(forest: ForestModel, x) -> tuple:
    """(mean, variance) of the loss model at one vectorized configuration."""
    x = np.asarray(x, dtype=np.float64)
    preds = np.array([_tree_predict(t, x) for t in forest.trees])
    mu, var = float(preds.mean()), float(preds.var())
    if forest.log_space:
        mean = float(np.exp(mu + 0.5 * var))
        variance = float((np.exp(var) - 1.0) * np.exp(2.0 * mu + var))
        return mean, max(variance, 0.0)
    return mu, max(var, 0.0)


def predict_forest_batch(forest: ForestModel, X, transform: bool = True) -> tuple:
    """Vectorized (means, variances) over rows of X.

    ``transform=False`` returns moments in the forest's model space (log space
    for log-fitted forests), the scale acquisition functions should work on.
    """
    X = np.asarray(X, dtype=np.float64)
    preds = np.empty((len(forest.trees), len(X)))
    for i, t in enumerate(forest.trees):
        preds[i] = [_tree_predict(t, x) for x in X]
    mu = preds.mean(axis=0)
    var = np.maximum(preds.var(axis=0), 0.0)
    if forest.log_space and transform:
        mean = np.exp(mu + 0.5 * var)
        variance = np.maximum((np.exp(var) - 1.0) * np.exp(2.0 * mu + var), 0.0)
        return mean, variance
    return mu, var


def model_space_best(forest: ForestModel, y) -> float:
    """The incumbent loss expressed in the forest's model space."""
    best = float(np.min(y))
    return float(np.log(best)) if forest.log_space else best


def expected_improvement(mean, variance, f_best):
    """EI of a normal posterior against the incumbent loss (minimization)."""
    scalar = np.isscalar(mean) or np.ndim(mean) == 0
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    variance = np.atleast_1d(np.asarray(variance, dtype=np.float64))
    sigma = np.sqrt(variance)
    improve = f_best - mean
    ei = np.maximum(improve, 0.0)  # sigma == 0 case
    nz = sigma > 0
    if np.any(nz):
        z = improve[nz] / sigma[nz]
        phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        ei[nz] = improve[nz] * ndtr(z) + sigma[nz] * phi
    return float(ei[0]) if scalar else ei
