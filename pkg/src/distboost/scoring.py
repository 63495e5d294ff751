"""Probabilistic and point forecast evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .distributions import (
    DISTRIBUTION_NAMES,
    Family,
    Normal,
    ParamVector,
    unconditional_mle,
)
from .errors import AllCandidatesFailed, BadTau, NoConvergence, SupportViolation, ZeroDenominator

U_CLAMP = 1e-10
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def crps_normal(mu, sigma, y):
    """Closed-form CRPS of Normal(mu, sigma^2) at y."""
    z = (np.asarray(y, dtype=float) - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return sigma * (z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)


def crps_sample(samples, y):
    """Sample CRPS, ``mean|X - y| - 0.5 * mean_{i != j}|X_i - X_j|``, per row.

    ``samples`` has shape (n_rows, S) or (S,); the pairwise term uses the
    unbiased i != j average. Results are floored at zero.
    """
    x = np.sort(np.asarray(samples, dtype=float), axis=-1)
    y = np.asarray(y, dtype=float)
    s = x.shape[-1]
    if s < 2:
        raise ValueError("need at least two samples")
    first = np.mean(np.abs(x - y[..., None]), axis=-1)
    ranks = 2.0 * np.arange(s) - s + 1.0
    pair_sum = np.sum(x * ranks, axis=-1)  # sum over i < j of x_(j) - x_(i)
    spread = 2.0 * pair_sum / (s * (s - 1.0))
    return np.maximum(first - 0.5 * spread, 0.0)


def crps_rows(family: Family, theta, y, n_samples: int = 1000, seed: int = 0) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    family.check_params(theta)
    y = np.asarray(y, dtype=float)
    if isinstance(family, Normal):
        return crps_normal(theta[..., 0], theta[..., 1], y)
    rng = np.random.default_rng(seed)
    samples = family.sample(theta[..., None, :], rng, size=y.shape + (n_samples,))
    return crps_sample(samples, y)


def crps(family: Family, pv: ParamVector, y, n_samples: int = 1000, seed: int = 0) -> float:
    """CRPS of one predictive distribution; closed form for Normal, sampled otherwise."""
    return float(crps_rows(family, pv.theta, y, n_samples, seed))


def log_score(family: Family, pv: ParamVector, y) -> float:
    family.check_support(y)
    return float(family.nll(y, pv.theta))


def quantile_loss(y, yhat, tau: float) -> float:
    """Normalised quantile loss ``sum QL_tau(y_i, yhat_i) / sum |y_i|``.

    ``QL_tau(y, q) = 2 * [tau * (y - q) if y > q else (1 - tau) * (q - y)]``.
    """
    if not 0.0 < tau < 1.0:
        raise BadTau(f"tau must lie in (0, 1), got {tau}")
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    denom = np.sum(np.abs(y))
    if denom == 0:
        raise ZeroDenominator("sum of |y| is zero")
    d = y - yhat
    losses = 2.0 * np.where(d > 0, tau * d, (tau - 1.0) * d)
    return float(np.sum(losses) / denom)


def quantile_residuals(family: Family, theta, y, seed: int = 0) -> np.ndarray:
    """Normal scores of the fitted CDF at each observation.

    For count families the CDF value is drawn uniformly between F(y - 1) and
    F(y) (randomised quantile residuals).
    """
    y = np.asarray(y, dtype=float)
    family.check_support(y)
    theta = np.asarray(theta, dtype=float)
    u = family.cdf(y, theta)
    if family.discrete:
        lower = family.cdf(y - 1.0, theta)
        v = np.random.default_rng(seed).uniform(size=np.shape(u))
        u = lower + v * (u - lower)
    u = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
    return special.ndtri(u)


def gaic(family: Family, y, penalty: float = 2.0, weights=None) -> float:
    pv = unconditional_mle(family, y, weights)
    nll = family.nll(np.asarray(y, dtype=float), pv.theta)
    total = np.sum(nll) if weights is None else np.sum(np.asarray(weights) * nll)
    return float(2.0 * total + penalty * family.n_params)


def gaic_select(y, candidates: Sequence[Family], penalty: float = 2.0, weights=None) -> list[tuple[Family, float]]:
    """Rank intercept-only fits of each candidate by GAIC, lowest first.

    Candidates whose support excludes some response value are skipped with a
    warning, as are fits that fail to converge. Duplicate names count once.
    """
    seen, ranked = set(), []
    for fam in candidates:
        if fam.name in seen:
            continue
        seen.add(fam.name)
        if fam.name not in DISTRIBUTION_NAMES:
            warnings.warn(f"{fam.name} is not a distribution; skipped", stacklevel=2)
            continue
        try:
            ranked.append((fam, gaic(fam, y, penalty, weights)))
        except SupportViolation as exc:
            warnings.warn(f"{fam.name} skipped: {exc}", stacklevel=2)
        except NoConvergence as exc:
            warnings.warn(f"{fam.name} skipped: {exc}", stacklevel=2)
    if not ranked:
        raise AllCandidatesFailed("no candidate family could be fitted")
    ranked.sort(key=lambda fg: (fg[1], fg[0].n_params, fg[0].name))
    return ranked


POINT_METRICS = ("mape", "mse", "rmse", "mae", "median_ae", "rae", "rmspe", "rmsle", "rrse", "r2")


def point_metrics(y, yhat) -> dict[str, float]:
    """Point-forecast errors; a metric whose domain is violated is left out."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise ValueError("y and yhat must be non-empty and aligned")
    err = y - yhat
    abs_err = np.abs(err)
    mse = float(np.mean(err**2))
    out = {
        "mse": mse,
        "rmse": math.sqrt(mse),
        "mae": float(np.mean(abs_err)),
        "median_ae": float(np.median(abs_err)),
    }
    if np.all(y != 0):
        out["mape"] = float(np.mean(abs_err / np.abs(y)))
        out["rmspe"] = math.sqrt(float(np.mean((err / y) ** 2)))
    if np.all(y > -1) and np.all(yhat > -1):
        out["rmsle"] = math.sqrt(float(np.mean((np.log1p(yhat) - np.log1p(y)) ** 2)))
    dev = y - np.mean(y)
    ss_tot = float(np.sum(dev**2))
    if ss_tot > 0:
        ss_res = float(np.sum(err**2))
        out["rae"] = float(np.sum(abs_err) / np.sum(np.abs(dev)))
        out["rrse"] = math.sqrt(ss_res / ss_tot)
        out["r2"] = 1.0 - ss_res / ss_tot
    return {k: out[k] for k in POINT_METRICS if k in out}


@dataclass
class ScoreReport:
    crps: float
    log_score: float
    point_metrics: dict[str, float] = field(default_factory=dict)
    quantile_losses: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "crps": self.crps,
            "log_score": self.log_score,
            "point_metrics": dict(self.point_metrics),
            "quantile_losses": {repr(float(t)): v for t, v in self.quantile_losses.items()},
        }


def score(pred, y, taus: Sequence[float] = (), n_samples: int = 1000, seed: int = 0) -> ScoreReport:
    """Average CRPS and log score plus point and quantile metrics.

    ``pred`` is a fitted :class:`~distboost.booster.PredictiveDistribution`;
    its mean serves as the point forecast.
    """
    y = np.asarray(y, dtype=float)
    fam = pred.family
    fam.check_support(y)
    c = crps_rows(fam, pred.theta, y, n_samples, seed)
    ls = fam.nll(y, pred.theta)
    ql = {}
    if len(taus):
        q = pred.quantile(list(taus))
        ql = {float(t): quantile_loss(y, q[:, j], t) for j, t in enumerate(taus)}
    return ScoreReport(float(np.mean(c)), float(np.mean(ls)), point_metrics(y, pred.mean()), ql)
