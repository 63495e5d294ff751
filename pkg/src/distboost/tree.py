"""Second-order regression trees grown by exact greedy split search."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EmptyInput, WidthMismatch


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    gain: float = 0.0


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 2
    min_samples_leaf: int = 100
    reg_lambda: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be non-negative")


def presort(X: np.ndarray) -> list[np.ndarray]:
    """Row order of every column, ascending; reusable across trees on the same X."""
    return [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]


def _best_split_for_feature(xs, gs, hs, G, H, cfg):
    """Best (gain, position) for one feature given rows sorted by it."""
    n = xs.shape[0]
    msl = cfg.min_samples_leaf
    if n < 2 * msl:
        return -np.inf, -1
    GL = np.cumsum(gs)[:-1]
    HL = np.cumsum(hs)[:-1]
    GR = G - GL
    HR = H - HL
    valid = xs[:-1] < xs[1:]
    valid[: msl - 1] = False
    if msl > 1:
        valid[n - msl :] = False
    if not valid.any():
        return -np.inf, -1
    lam = cfg.reg_lambda
    gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - cfg.gamma
    gain = np.where(valid, gain, -np.inf)
    pos = int(np.argmax(gain))
    return float(gain[pos]), pos


class _Grower:
    def __init__(self, X, g, h, cfg, n_threads):
        self.X = X
        self.g = g
        self.h = h
        self.cfg = cfg
        self.pool = ThreadPoolExecutor(n_threads) if n_threads > 1 else None
        self.goes_left = np.zeros(X.shape[0], dtype=bool)

    def leaf(self, rows):
        G = float(np.sum(self.g[rows]))
        H = float(np.sum(self.h[rows]))
        return Leaf(-G / (H + self.cfg.reg_lambda))

    def grow(self, orders, depth):
        rows = np.sort(orders[0]) if orders else None
        if depth >= self.cfg.max_depth:
            return self.leaf(rows)
        G = float(np.sum(self.g[rows]))
        H = float(np.sum(self.h[rows]))

        def search(j):
            o = orders[j]
            return _best_split_for_feature(self.X[o, j], self.g[o], self.h[o], G, H, self.cfg)

        js = range(len(orders))
        results = list(self.pool.map(search, js)) if self.pool else [search(j) for j in js]
        best_gain, best_j, best_pos = 0.0, -1, -1
        # strict improvement keeps the lowest feature index on ties
        for j, (gain, pos) in enumerate(results):
            if gain > best_gain:
                best_gain, best_j, best_pos = gain, j, pos
        if best_j < 0:
            return self.leaf(rows)

        o = orders[best_j]
        lo, hi = self.X[o[best_pos], best_j], self.X[o[best_pos + 1], best_j]
        threshold = 0.5 * (lo + hi)
        if not lo <= threshold < hi:
            threshold = lo
        self.goes_left[o[: best_pos + 1]] = True
        left_orders, right_orders = [], []
        for oj in orders:
            mask = self.goes_left[oj]
            left_orders.append(oj[mask])
            right_orders.append(oj[~mask])
        self.goes_left[o[: best_pos + 1]] = False
        return Split(
            best_j,
            float(threshold),
            self.grow(left_orders, depth + 1),
            self.grow(right_orders, depth + 1),
            best_gain,
        )


def fit_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    cfg: TreeConfig = TreeConfig(),
    orders: list[np.ndarray] | None = None,
    n_threads: int = 1,
) -> TreeNode:
    """Grow one tree on per-row gradients ``g`` and Hessians ``h``.

    Split gain is ``0.5 * [GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)] - gamma``
    and leaves take the Newton value ``-G / (H + lam)``. Ties go to the lower
    feature index, then the lower threshold. Pass ``orders`` from
    :func:`presort` to reuse the column sort across many trees.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise WidthMismatch("features must be a 2-d matrix")
    n = X.shape[0]
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if n == 0:
        raise EmptyInput("cannot fit a tree on zero rows")
    if g.shape != (n,) or h.shape != (n,):
        raise WidthMismatch("gradients and Hessians must be row-aligned with the features")
    if orders is None:
        orders = presort(X)
    if n_threads == 0:
        n_threads = os.cpu_count() or 1
    grower = _Grower(X, g, h, cfg, n_threads if X.shape[1] > 1 else 1)
    try:
        if X.shape[1] == 0:
            return grower.leaf(np.arange(n))
        return grower.grow(list(orders), 0)
    finally:
        if grower.pool is not None:
            grower.pool.shutdown()


def predict_tree(tree: TreeNode, X: np.ndarray, n_features: int | None = None) -> np.ndarray:
    """Evaluate a tree on each row of ``X`` (a single row may be passed as 1-d)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise WidthMismatch(f"expected {n_features} features, got {X.shape[1]}")
    out = np.empty(X.shape[0])
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if isinstance(node, Leaf):
            out[rows] = node.value
            continue
        if node.feature >= X.shape[1]:
            raise WidthMismatch(f"tree splits on feature {node.feature} but rows have {X.shape[1]} columns")
        left = X[rows, node.feature] <= node.threshold
        stack.append((node.right, rows[~left]))
        stack.append((node.left, rows[left]))
    return out[0] if single else out


def gain_by_feature(tree: TreeNode) -> dict[int, float]:
    out: dict[int, float] = {}
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Split):
            out[node.feature] = out.get(node.feature, 0.0) + node.gain
            stack.extend((node.left, node.right))
    return out


def leaves(tree: TreeNode) -> list[Leaf]:
    if isinstance(tree, Leaf):
        return [tree]
    return leaves(tree.left) + leaves(tree.right)


def tree_to_dict(tree: TreeNode) -> dict:
    if isinstance(tree, Leaf):
        return {"leaf": tree.value}
    return {
        "feature": tree.feature,
        "threshold": tree.threshold,
        "gain": tree.gain,
        "left": tree_to_dict(tree.left),
        "right": tree_to_dict(tree.right),
    }


def tree_from_dict(d: dict) -> TreeNode:
    if "leaf" in d:
        return Leaf(float(d["leaf"]))
    return Split(
        int(d["feature"]),
        float(d["threshold"]),
        tree_from_dict(d["left"]),
        tree_from_dict(d["right"]),
        float(d.get("gain", 0.0)),
    )
