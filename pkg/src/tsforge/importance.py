"""First-order fANOVA hyperparameter importance from a run history.

A forest is fitted on (vectorized configuration, loss) pairs from one budget
rung. Each tree partitions the input box into leaf cells; the marginal mean
function of a dimension is the cell-volume-weighted average over all other
dimensions, and the dimension's importance is the fraction of the tree's total
variance explained by that marginal, averaged over trees. Pairwise and higher
interactions are not separated out; they remain in the residual.

The inactive sentinel (-1) participates as an ordinary value, so a conditional
hyperparameter's importance includes the effect of being switched on at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import TooFewRuns, ZeroVariance
from .forest import fit_forest
from .space import Configuration, SearchSpace

MIN_RUNS = 10


@dataclass
class ImportanceReport:
    per_hyperparameter: dict
    residual: float
    budget_value: float
    num_runs: int


def _leaves(node, box):
    if node.is_leaf:
        return [(box, node.value)]
    left_box = [list(b) for b in box]
    right_box = [list(b) for b in box]
    left_box[node.dim][1] = min(left_box[node.dim][1], node.threshold)
    right_box[node.dim][0] = max(right_box[node.dim][0], node.threshold)
    return _leaves(node.left, left_box) + _leaves(node.right, right_box)


def _tree_importances(tree, domains: np.ndarray) -> Optional[np.ndarray]:
    """Per-dimension V_i / V_total for one tree; None if the tree is constant."""
    d = len(domains)
    box = [[float(domains[i, 0]), float(domains[i, 1])] for i in range(d)]
    leaves = _leaves(tree, box)
    lo = np.array([[b[i][0] for i in range(d)] for b, _ in leaves])
    hi = np.array([[b[i][1] for i in range(d)] for b, _ in leaves])
    values = np.array([v for _, v in leaves])
    widths = np.maximum(hi - lo, 0.0)
    lengths = domains[:, 1] - domains[:, 0]
    fracs = widths / lengths  # (L, d)
    total_frac = fracs.prod(axis=1)

    mean = float((values * total_frac).sum())
    v_total = float((values * values * total_frac).sum() - mean * mean)
    if v_total <= 0.0:
        return None

    out = np.zeros(d)
    for i in range(d):
        edges = np.unique(np.concatenate([lo[:, i], hi[:, i]]))
        mids = 0.5 * (edges[:-1] + edges[1:])
        seg_w = (edges[1:] - edges[:-1]) / lengths[i]
        contrib = values * total_frac / np.maximum(fracs[:, i], 1e-300)
        covers = (lo[:, i][None, :] <= mids[:, None]) & (mids[:, None] <= hi[:, i][None, :])
        y_marg = covers @ contrib
        e = float((y_marg * seg_w).sum())
        out[i] = max(float((y_marg * y_marg * seg_w).sum() - e * e), 0.0) / v_total
    return out


def fanova(records: list, space: SearchSpace, num_trees: int = 50,
           rng=None, min_leaf: int = 3) -> ImportanceReport:
    """First-order importance fractions for every hyperparameter at one rung."""
    ok = [r for r in records if r.status == "ok" and np.isfinite(r.val_loss)]
    if len(ok) < MIN_RUNS:
        raise TooFewRuns(f"need at least {MIN_RUNS} successful runs, got {len(ok)}")
    budgets = {r.budget_value for r in ok}
    if len(budgets) > 1:
        raise ValueError("fANOVA expects records from a single budget rung")
    rng = rng if rng is not None else np.random.default_rng(0)

    X = np.array([space.vectorize(Configuration(r.config, r.space_hash)) for r in ok])
    y = np.array([r.val_loss for r in ok])
    if np.ptp(y) == 0.0:
        raise ZeroVariance("all losses are identical")
    forest = fit_forest(X, y, num_trees=num_trees, min_leaf=min_leaf, rng=rng,
                        log_space=False)

    domains = np.array([
        [-1.0 if d.condition is not None else 0.0, 1.0] for d in space.defs
    ])
    per_tree = []
    for tree in forest.trees:
        imp = _tree_importances(tree, domains)
        if imp is not None:
            per_tree.append(imp)
    if not per_tree:
        raise ZeroVariance("every tree in the forest is constant")
    mean_imp = np.mean(per_tree, axis=0)
    per_hp = {d.name: float(mean_imp[i]) for i, d in enumerate(space.defs)}
    residual = 1.0 - float(mean_imp.sum())
    if abs(residual) < 1e-12:
        residual = 0.0
    return ImportanceReport(per_hyperparameter=per_hp, residual=residual,
                            budget_value=float(next(iter(budgets))), num_runs=len(ok))


def pooled_summary(reports: dict) -> list:
    """Median and quartiles per hyperparameter across datasets.

    ``reports`` maps dataset name to :class:`ImportanceReport`. Returns rows
    (hyperparameter, median, q1, q3) in space order of the first report.
    """
    if not reports:
        return []
    names = list(next(iter(reports.values())).per_hyperparameter)
    rows = []
    for name in names:
        vals = np.array([rep.per_hyperparameter[name] for rep in reports.values()])
        rows.append((name, float(np.median(vals)),
                     float(np.percentile(vals, 25)), float(np.percentile(vals, 75))))
    return rows
