"""Shared oracles and generators for the test suite."""

from __future__ import annotations

import numpy as np

from distboost.distributions import get_family

# natural-scale parameter ranges used for randomized checks
PARAM_RANGES = {
    "normal": [(-5.0, 5.0), (0.3, 3.0)],
    "lognormal": [(-1.0, 1.0), (0.3, 1.5)],
    "gamma": [(0.5, 5.0), (0.5, 5.0)],
    "weibull": [(0.5, 5.0), (0.7, 4.0)],
    "studentt": [(-5.0, 5.0), (0.3, 3.0), (2.5, 30.0)],
    "poisson": [(0.5, 20.0)],
    "negbinomial": [(0.5, 20.0), (0.05, 2.0)],
    "expectile": [(-5.0, 5.0)],
}


def random_theta(name: str, rng: np.random.Generator, n: int) -> np.ndarray:
    return np.column_stack([rng.uniform(lo, hi, n) for lo, hi in PARAM_RANGES[name]])


def random_points(name: str, rng: np.random.Generator, n: int):
    """Family instance, natural parameters and responses drawn from the family."""
    if name == "expectile":
        fam = get_family(name, tau=float(rng.uniform(0.05, 0.95)))
        theta = random_theta(name, rng, n)
        y = theta[:, 0] + rng.normal(0.0, 2.0, n)
        return fam, theta, y
    fam = get_family(name)
    theta = random_theta(name, rng, n)
    y = fam.sample(theta, rng)
    if fam.support == "positive":
        y = np.maximum(y, 1e-3)
    return fam, theta, y


def fd_derivatives(fam, y, theta, k: int, step: float = 1e-6):
    """Central differences in eta_k: NLL for the gradient, analytic gradient for the Hessian."""
    eta = fam.to_eta(theta)
    up, dn = eta.copy(), eta.copy()
    up[:, k] += step
    dn[:, k] -= step
    th_up, th_dn = fam.to_theta(up), fam.to_theta(dn)
    g = (fam.nll(y, th_up) - fam.nll(y, th_dn)) / (2 * step)
    h = (fam.derivatives(y, th_up, k)[0] - fam.derivatives(y, th_dn, k)[0]) / (2 * step)
    return g, h


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


# -- an independent squared-error booster ------------------------------------------


def _ref_tree(X, r, depth, max_depth, min_leaf, lam):
    """Exhaustive least-squares tree on residuals r (brute force over all midpoints)."""
    n = len(r)
    leaf = float(np.sum(r) / (n + lam))
    if depth >= max_depth or n < 2 * min_leaf:
        return ("leaf", leaf)
    total = np.sum(r) ** 2 / (n + lam)
    best = None
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        for a, b in zip(values[:-1], values[1:]):
            t = 0.5 * (a + b)
            left = X[:, j] <= t
            nl = int(left.sum())
            if nl < min_leaf or n - nl < min_leaf:
                continue
            sl, sr = np.sum(r[left]), np.sum(r[~left])
            gain = 0.5 * (sl**2 / (nl + lam) + sr**2 / (n - nl + lam) - total)
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, j, t, left)
    if best is None:
        return ("leaf", leaf)
    _, j, t, left = best
    return (
        "split",
        j,
        t,
        _ref_tree(X[left], r[left], depth + 1, max_depth, min_leaf, lam),
        _ref_tree(X[~left], r[~left], depth + 1, max_depth, min_leaf, lam),
    )


def _ref_predict(node, X):
    if node[0] == "leaf":
        return np.full(X.shape[0], node[1])
    _, j, t, left, right = node
    out = np.empty(X.shape[0])
    m = X[:, j] <= t
    out[m] = _ref_predict(left, X[m])
    out[~m] = _ref_predict(right, X[~m])
    return out


def reference_l2_boost(X, y, n_iters, shrinkage, max_depth, min_leaf, lam, base):
    """Plain gradient boosting on squared error; returns training predictions and trees."""
    f = np.full(len(y), base)
    trees = []
    for _ in range(n_iters):
        tree = _ref_tree(X, y - f, 0, max_depth, min_leaf, lam)
        trees.append(tree)
        f = f + shrinkage * _ref_predict(tree, X)
    return f, trees


def reference_predict(trees, X, base, shrinkage):
    f = np.full(X.shape[0], base)
    for t in trees:
        f = f + shrinkage * _ref_predict(t, X)
    return f
