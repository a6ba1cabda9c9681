"""CART regression tree on (moneyness, maturity) with weakest-link pruning.

Splits maximise the reduction in residual sum of squares, which is the CART
deviance for a continuous response. Growth is best-first so that the leaf
cap is honoured by always expanding the most useful leaf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import kernels
from .errors import TooFewObservations

PREDICTORS = ("moneyness", "maturity")


@dataclass(frozen=True, eq=False)
class TreeNode:
    prediction: float
    n_obs: int
    node_sse: float
    node_id: int = 0
    split_var: str | None = None
    split_point: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaves(self) -> list["TreeNode"]:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def internal_nodes(self) -> list["TreeNode"]:
        if self.is_leaf:
            return []
        return [self] + self.left.internal_nodes() + self.right.internal_nodes()

    def walk(self) -> Iterator["TreeNode"]:
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()

    @property
    def tree_sse(self) -> float:
        """Training SSE of the tree rooted here (sum over its leaves)."""
        return math.fsum(leaf.node_sse for leaf in self.leaves())

    def as_leaf(self) -> "TreeNode":
        return TreeNode(self.prediction, self.n_obs, self.node_sse, self.node_id)

    def structure(self):
        """Hashable shape used to compare trees (split vars, points, leaf values)."""
        if self.is_leaf:
            return ("leaf", self.prediction)
        return (self.split_var, self.split_point, self.left.structure(), self.right.structure())

    def to_dict(self) -> dict:
        d = {
            "node_id": self.node_id,
            "n_obs": self.n_obs,
            "node_sse": self.node_sse,
            "prediction": self.prediction,
        }
        if not self.is_leaf:
            d.update(
                split_var=self.split_var,
                split_point=self.split_point,
                left=self.left.to_dict(),
                right=self.right.to_dict(),
            )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "split_var" not in d:
            return cls(d["prediction"], d["n_obs"], d["node_sse"], d.get("node_id", 0))
        return cls(
            d["prediction"],
            d["n_obs"],
            d["node_sse"],
            d.get("node_id", 0),
            d["split_var"],
            d["split_point"],
            cls.from_dict(d["left"]),
            cls.from_dict(d["right"]),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "TreeNode":
        return cls.from_dict(json.loads(text))


@dataclass
class PruneSchedule:
    """Nested subtrees and the complexity values at which each becomes optimal."""

    alphas: list[float]
    subtrees: list[TreeNode]
    cv_errors: list[float] | None = None
    cv_stderr: list[float] | None = None

    def subtree_at(self, alpha: float) -> TreeNode:
        """Smallest subtree minimising SSE + alpha * leaves."""
        k = int(np.searchsorted(np.asarray(self.alphas), alpha, side="right")) - 1
        return self.subtrees[max(k, 0)]


def _as_arrays(data):
    if isinstance(data, tuple) and len(data) == 3:
        m, tau, iv = (np.asarray(a, dtype=float) for a in data)
    elif hasattr(data, "pooled"):
        m, tau, iv = data.pooled()
    elif hasattr(data, "moneyness"):
        m, tau, iv = data.moneyness, data.maturity, data.iv
    else:
        quotes = list(data)
        m = np.array([q.moneyness for q in quotes], dtype=float)
        tau = np.array([q.maturity for q in quotes], dtype=float)
        iv = np.array([q.iv for q in quotes], dtype=float)
    return np.column_stack([m, tau]), np.asarray(iv, dtype=float)


@dataclass(eq=False)
class _Leaf:
    idx: np.ndarray
    node_id: int
    gain: float = -math.inf
    var: int = -1
    point: float = math.nan
    left_idx: np.ndarray | None = None
    right_idx: np.ndarray | None = None
    children: tuple = field(default_factory=tuple)


def _find_split(X, y, leaf: _Leaf, min_leaf: int) -> None:
    yy = y[leaf.idx]
    if yy.size < 2 * min_leaf or np.ptp(yy) == 0.0:
        return
    centred = yy - yy.mean()
    sse = float(centred @ centred)
    for var in range(X.shape[1]):
        xv = X[leaf.idx, var]
        order = np.argsort(xv, kind="stable")
        xs = np.ascontiguousarray(xv[order])
        gain, k = kernels.best_split(xs, np.ascontiguousarray(centred[order]), min_leaf)
        if k < 0 or not gain > 1e-14 * sse:
            continue
        if gain > leaf.gain:
            point = 0.5 * (xs[k - 1] + xs[k])
            leaf.gain, leaf.var, leaf.point = float(gain), var, float(point)
            mask = xv <= point
            leaf.left_idx, leaf.right_idx = leaf.idx[mask], leaf.idx[~mask]


def _node_stats(y):
    mean = float(y.mean())
    r = y - mean
    return mean, float(r @ r)


def grow_tree(data, max_leaves: int = 10, min_leaf: int = 5) -> TreeNode:
    """Best-first CART growth up to ``max_leaves`` leaves.

    ``data`` may be a PanelSeries, a SurfacePanel, a sequence of IVQuote or
    a ``(moneyness, maturity, iv)`` tuple of arrays. Growth stops early once
    no leaf has an admissible split that lowers the SSE.
    """
    if max_leaves < 2:
        raise ValueError("max_leaves must be at least 2")
    X, y = _as_arrays(data)
    n = y.size
    if n < 2 * min_leaf or n == 0:
        raise TooFewObservations(f"{n} observations for min_leaf={min_leaf}")
    next_id = 1
    root = _Leaf(np.arange(n), 0)
    _find_split(X, y, root, min_leaf)
    frontier = [root]
    splits: dict[int, _Leaf] = {}
    n_leaves = 1
    while n_leaves < max_leaves:
        cands = [lf for lf in frontier if lf.var >= 0]
        if not cands:
            break
        best = max(cands, key=lambda lf: (lf.gain, -lf.node_id))
        frontier.remove(best)
        left = _Leaf(best.left_idx, next_id)
        right = _Leaf(best.right_idx, next_id + 1)
        next_id += 2
        best.children = (left, right)
        splits[best.node_id] = best
        for child in (left, right):
            _find_split(X, y, child, min_leaf)
            frontier.append(child)
        n_leaves += 1

    def build(lf: _Leaf) -> TreeNode:
        mean, sse = _node_stats(y[lf.idx])
        if lf.node_id not in splits:
            return TreeNode(mean, int(lf.idx.size), sse, lf.node_id)
        left, right = lf.children
        return TreeNode(
            mean, int(lf.idx.size), sse, lf.node_id,
            PREDICTORS[lf.var], lf.point, build(left), build(right),
        )

    return build(root)


def predict_tree(tree: TreeNode, moneyness, maturity):
    """Route points to leaves; a value equal to the split point goes left."""
    m = np.asarray(moneyness, dtype=float)
    tau = np.asarray(maturity, dtype=float)
    scalar = m.ndim == 0 and tau.ndim == 0
    m, tau = np.broadcast_arrays(np.atleast_1d(m), np.atleast_1d(tau))
    cols = {"moneyness": m.ravel(), "maturity": tau.ravel()}
    out = np.empty(m.size)
    stack = [(tree, np.arange(m.size))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.prediction
            continue
        go_left = cols[node.split_var][idx] <= node.split_point
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    if scalar:
        return float(out[0])
    return out.reshape(m.shape)


def collapse(tree: TreeNode, node_ids) -> TreeNode:
    """Copy of ``tree`` with the listed internal nodes turned into leaves."""
    node_ids = set(node_ids)

    def rec(node):
        if node.is_leaf:
            return node
        if node.node_id in node_ids:
            return node.as_leaf()
        return TreeNode(
            node.prediction, node.n_obs, node.node_sse, node.node_id,
            node.split_var, node.split_point, rec(node.left), rec(node.right),
        )

    return rec(tree)


def _weakest_links(tree: TreeNode) -> dict[int, float]:
    out = {}
    for node in tree.internal_nodes():
        out[node.node_id] = (node.node_sse - node.tree_sse) / (node.n_leaves - 1)
    return out


def prune_path(tree: TreeNode, rel_tol: float = 1e-10) -> PruneSchedule:
    """Weakest-link (cost-complexity) pruning sequence.

    ``alphas[0]`` is 0 for the full tree; every later entry is the critical
    complexity at which the next subtree takes over. Nodes whose critical
    values tie are collapsed together, so alphas are strictly increasing and
    the last subtree is the root stump.
    """
    alphas = [0.0]
    subtrees = [tree]
    current = tree
    while not current.is_leaf:
        g = _weakest_links(current)
        gmin = min(g.values())
        tol = rel_tol * max(abs(gmin), 1e-300)
        current = collapse(current, [k for k, v in g.items() if v <= gmin + tol])
        if gmin <= alphas[-1] + rel_tol * max(abs(alphas[-1]), 1e-300) and len(alphas) > 1:
            subtrees[-1] = current
        else:
            alphas.append(gmin)
            subtrees.append(current)
    return PruneSchedule(alphas, subtrees)


def fit_pruned(data, alpha: float, max_leaves: int = 10, min_leaf: int = 5) -> TreeNode:
    """Grow a tree and prune it at complexity ``alpha``."""
    return prune_path(grow_tree(data, max_leaves, min_leaf)).subtree_at(alpha)


def cross_validate(
    data, folds: int = 10, seed: int = 0, max_leaves: int = 10, min_leaf: int = 5
) -> PruneSchedule:
    """Prune schedule of the full-data tree with k-fold CV errors per alpha.

    Quotes are pooled, shuffled with ``seed`` and dealt into folds. Each
    fold's tree is pruned at every alpha of the full-data schedule; the CV
    error is the mean held-out SSE per fold, with its standard error.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    X, y = _as_arrays(data)
    n = y.size
    if n < folds * 2 * min_leaf:
        raise TooFewObservations(f"{n} observations are too few for {folds}-fold CV")
    schedule = prune_path(grow_tree((X[:, 0], X[:, 1], y), max_leaves, min_leaf))
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % folds
    errs = np.zeros((folds, len(schedule.alphas)))
    for f in range(folds):
        train, test = fold_of != f, fold_of == f
        sched_f = prune_path(grow_tree((X[train, 0], X[train, 1], y[train]), max_leaves, min_leaf))
        for k, a in enumerate(schedule.alphas):
            pred = predict_tree(sched_f.subtree_at(a), X[test, 0], X[test, 1])
            r = y[test] - pred
            errs[f, k] = float(r @ r)
    schedule.cv_errors = errs.mean(axis=0).tolist()
    schedule.cv_stderr = (errs.std(axis=0, ddof=1) / math.sqrt(folds)).tolist()
    return schedule


def select_complexity(
    data, folds: int = 10, seed: int = 0, max_leaves: int = 10, min_leaf: int = 5
) -> float:
    """Complexity parameter with the smallest mean cross-validated SSE.

    Ties go to the larger alpha (the simpler tree).
    """
    sched = cross_validate(data, folds, seed, max_leaves, min_leaf)
    cv = np.asarray(sched.cv_errors)
    best = np.flatnonzero(cv == cv.min())
    return float(sched.alphas[int(best.max())])
