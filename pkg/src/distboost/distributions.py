"""Response distributions parametrised on the raw predictor (link) scale.

Every family exposes per-row negative log-likelihoods together with analytic
first and second derivatives with respect to each raw predictor ``eta_k``.
Those derivatives are what the booster feeds to its trees. Parameter arrays
have shape ``(..., K)``, with the parameters in the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    BadProbability,
    BadTau,
    InvalidParams,
    NoConvergence,
    SupportViolation,
    UnknownFamily,
)

HESSIAN_FLOOR = 1e-6
SIGMA_FLOOR = 1e-6

REAL = "real"
POSITIVE = "positive"
COUNT = "non-negative-integer"

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Link:
    kind: str

    def inverse(self, eta):
        if self.kind == "identity":
            return np.asarray(eta, dtype=float)
        if self.kind == "log":
            return np.exp(eta)
        raise ValueError(f"unknown link {self.kind!r}")

    def forward(self, theta):
        if self.kind == "identity":
            return np.asarray(theta, dtype=float)
        if self.kind == "log":
            return np.log(theta)
        raise ValueError(f"unknown link {self.kind!r}")


IDENTITY = Link("identity")
LOG = Link("log")


@dataclass(frozen=True)
class ParamVector:
    """One observation's parameters on both scales."""

    eta: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_eta(cls, family: "Family", eta) -> "ParamVector":
        eta = np.asarray(eta, dtype=float)
        return cls(eta, family.to_theta(eta))

    @classmethod
    def from_theta(cls, family: "Family", theta) -> "ParamVector":
        return cls.from_eta(family, family.to_eta(np.asarray(theta, dtype=float)))


class Family:
    """Base class for a K-parameter response distribution."""

    name: str = ""
    param_names: tuple[str, ...] = ()
    links: tuple[Link, ...] = ()
    support: str = REAL
    # natural-scale lower bounds applied after the inverse link
    floors: dict[int, float] = {}
    discrete = False

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.name)

    def to_dict(self) -> dict:
        return {"name": self.name}

    # -- parameter transforms ------------------------------------------------

    def to_theta(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        theta = np.empty_like(eta)
        for k, link in enumerate(self.links):
            theta[..., k] = link.inverse(eta[..., k])
            if k in self.floors:
                theta[..., k] = np.maximum(theta[..., k], self.floors[k])
        return theta

    def to_eta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        eta = np.empty_like(theta)
        for k, link in enumerate(self.links):
            eta[..., k] = link.forward(theta[..., k])
        return eta

    def check_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise InvalidParams(f"{self.name}: non-finite parameters")
        for k, link in enumerate(self.links):
            if link.kind == "log" and np.any(theta[..., k] <= 0):
                raise InvalidParams(f"{self.name}: parameter {self.param_names[k]} must be positive")

    def in_support(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.support == REAL:
            return np.isfinite(y)
        if self.support == POSITIVE:
            return np.isfinite(y) & (y > 0)
        return np.isfinite(y) & (y >= 0) & (y == np.floor(y))

    def check_support(self, y) -> None:
        ok = self.in_support(y)
        if not np.all(ok):
            bad = np.asarray(y, dtype=float)[~ok] if np.ndim(y) else y
            first = bad.flat[0] if np.ndim(bad) else bad
            raise SupportViolation(f"{self.name}: response value {first!r} outside the {self.support} support")

    # -- to be provided by subclasses ----------------------------------------

    def nll(self, y, theta) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, y, theta, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Unweighted, unclamped d/d eta_k and d^2/d eta_k^2 of the NLL."""
        raise NotImplementedError

    def cdf(self, y, theta) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, p, theta) -> np.ndarray:
        raise NotImplementedError

    def sample(self, theta, rng: np.random.Generator, size=None) -> np.ndarray:
        raise NotImplementedError

    def mean(self, theta) -> np.ndarray:
        raise NotImplementedError

    def variance(self, theta) -> np.ndarray:
        raise NotImplementedError

    def start(self, y, w) -> np.ndarray:
        """Moment-based starting values on the natural scale."""
        raise NotImplementedError

    def closed_form_mle(self, y, w) -> np.ndarray | None:
        return None

    # -- shared helpers --------------------------------------------------------

    def pdf(self, y, theta) -> np.ndarray:
        return np.exp(-self.nll(y, theta))

    def _bracket(self, theta):
        m = np.asarray(self.mean(theta), dtype=float)
        s = np.sqrt(np.asarray(self.variance(theta), dtype=float))
        s = np.where(np.isfinite(s) & (s > 0), s, np.maximum(np.abs(m), 1.0))
        return m, s

    def _bisect(self, p, theta):
        """Invert a continuous CDF by bisection, bracket grown from the mean."""
        p = np.asarray(p, dtype=float)
        theta = np.asarray(theta, dtype=float)
        shape = np.broadcast_shapes(p.shape, theta.shape[:-1])
        p = np.broadcast_to(p, shape).astype(float)
        theta = np.broadcast_to(theta, shape + (self.n_params,))
        m, s = self._bracket(theta)
        m = np.broadcast_to(m, shape).astype(float)
        s = np.broadcast_to(s, shape).astype(float)
        positive = self.support == POSITIVE
        lo = m - s
        hi = m + s
        if positive:
            lo = np.where(lo > 0, lo, 0.0)
        for _ in range(2100):
            low_bad = (self.cdf(lo, theta) > p) & ~(positive & (lo <= 0))
            high_bad = self.cdf(hi, theta) < p
            if not (low_bad.any() or high_bad.any()):
                break
            s = np.where(low_bad | high_bad, 2.0 * s, s)
            lo = np.where(low_bad, m - s, lo)
            if positive:
                lo = np.where(lo > 0, lo, 0.0)
            hi = np.where(high_bad, m + s, hi)
        for _ in range(2200):
            mid = 0.5 * (lo + hi)
            active = (hi - lo > 1e-10) & (mid > lo) & (mid < hi)
            if not active.any():
                break
            below = self.cdf(mid, theta) < p
            lo = np.where(active & below, mid, lo)
            hi = np.where(active & ~below, mid, hi)
        return 0.5 * (lo + hi)

    def _integer_search(self, p, theta):
        """Smallest integer q with cdf(q) >= p."""
        p = np.asarray(p, dtype=float)
        theta = np.asarray(theta, dtype=float)
        shape = np.broadcast_shapes(p.shape, theta.shape[:-1])
        p = np.broadcast_to(p, shape).astype(float)
        theta = np.broadcast_to(theta, shape + (self.n_params,))
        m, s = self._bracket(theta)
        hi = np.broadcast_to(np.ceil(m + s), shape).astype(float)
        step = np.broadcast_to(np.maximum(np.ceil(s), 1.0), shape).astype(float)
        for _ in range(200):
            short = self.cdf(hi, theta) < p
            if not short.any():
                break
            step = np.where(short, 2.0 * step, step)
            hi = np.where(short, hi + step, hi)
        lo = np.full(shape, -1.0)
        # invariant: cdf(lo) < p <= cdf(hi)
        while True:
            gap = hi - lo > 1
            if not gap.any():
                break
            mid = np.floor(0.5 * (lo + hi))
            reach = self.cdf(mid, theta) >= p
            hi = np.where(gap & reach, mid, hi)
            lo = np.where(gap & ~reach, mid, lo)
        return hi


def _cols(theta, n):
    theta = np.asarray(theta, dtype=float)
    return tuple(theta[..., k] for k in range(n))


class Normal(Family):
    name = "normal"
    param_names = ("mu", "sigma")
    links = (IDENTITY, LOG)
    support = REAL
    floors = {1: SIGMA_FLOOR}

    def nll(self, y, theta):
        mu, sigma = _cols(theta, 2)
        z = (y - mu) / sigma
        return np.log(sigma) + 0.5 * z * z + _HALF_LOG_2PI

    def derivatives(self, y, theta, k):
        mu, sigma = _cols(theta, 2)
        if k == 0:
            h = np.broadcast_to(1.0 / sigma**2, np.broadcast(y, sigma).shape)
            return (mu - y) / sigma**2, np.array(h)
        z2 = ((y - mu) / sigma) ** 2
        return 1.0 - z2, 2.0 * z2

    def cdf(self, y, theta):
        mu, sigma = _cols(theta, 2)
        return special.ndtr((y - mu) / sigma)

    def quantile(self, p, theta):
        mu, sigma = _cols(theta, 2)
        return mu + sigma * special.ndtri(p)

    def sample(self, theta, rng, size=None):
        mu, sigma = _cols(theta, 2)
        return rng.normal(mu, sigma, size=size)

    def mean(self, theta):
        return _cols(theta, 2)[0]

    def variance(self, theta):
        return _cols(theta, 2)[1] ** 2

    def closed_form_mle(self, y, w):
        mu = np.average(y, weights=w)
        sigma = math.sqrt(np.average((y - mu) ** 2, weights=w))
        return np.array([mu, max(sigma, SIGMA_FLOOR)])

    start = closed_form_mle


class LogNormal(Family):
    """Normal on the log of the response; ``mu`` and ``sigma`` refer to log y."""

    name = "lognormal"
    param_names = ("mu", "sigma")
    links = (IDENTITY, LOG)
    support = POSITIVE
    floors = {1: SIGMA_FLOOR}

    def nll(self, y, theta):
        ly = np.log(y)
        return Normal().nll(ly, theta) + ly

    def derivatives(self, y, theta, k):
        return Normal().derivatives(np.log(y), theta, k)

    def cdf(self, y, theta):
        mu, sigma = _cols(theta, 2)
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            ly = np.log(np.where(y > 0, y, 1.0))
        return np.where(y > 0, special.ndtr((ly - mu) / sigma), 0.0)

    def quantile(self, p, theta):
        return np.exp(Normal().quantile(p, theta))

    def sample(self, theta, rng, size=None):
        mu, sigma = _cols(theta, 2)
        return rng.lognormal(mu, sigma, size=size)

    def mean(self, theta):
        mu, sigma = _cols(theta, 2)
        return np.exp(mu + 0.5 * sigma**2)

    def variance(self, theta):
        mu, sigma = _cols(theta, 2)
        return np.expm1(sigma**2) * np.exp(2 * mu + sigma**2)

    def closed_form_mle(self, y, w):
        return Normal().closed_form_mle(np.log(y), w)

    start = closed_form_mle


class Gamma(Family):
    """Gamma with mean ``mu`` and shape ``alpha`` (rate alpha / mu)."""

    name = "gamma"
    param_names = ("mu", "alpha")
    links = (LOG, LOG)
    support = POSITIVE

    def nll(self, y, theta):
        mu, alpha = _cols(theta, 2)
        return (
            -alpha * np.log(alpha)
            + alpha * np.log(mu)
            - (alpha - 1.0) * np.log(y)
            + alpha * y / mu
            + special.gammaln(alpha)
        )

    def derivatives(self, y, theta, k):
        mu, alpha = _cols(theta, 2)
        if k == 0:
            return alpha * (1.0 - y / mu), alpha * y / mu
        d_alpha = -np.log(alpha) - 1.0 + np.log(mu) - np.log(y) + y / mu + special.digamma(alpha)
        g = alpha * d_alpha
        return g, g + alpha**2 * special.polygamma(1, alpha) - alpha

    def cdf(self, y, theta):
        mu, alpha = _cols(theta, 2)
        y = np.asarray(y, dtype=float)
        return special.gammainc(alpha, np.maximum(y, 0.0) * alpha / mu)

    def quantile(self, p, theta):
        return self._bisect(p, theta)

    def sample(self, theta, rng, size=None):
        mu, alpha = _cols(theta, 2)
        return rng.gamma(alpha, mu / alpha, size=size)

    def mean(self, theta):
        return _cols(theta, 2)[0]

    def variance(self, theta):
        mu, alpha = _cols(theta, 2)
        return mu**2 / alpha

    def start(self, y, w):
        mu = np.average(y, weights=w)
        var = np.average((y - mu) ** 2, weights=w)
        return np.array([mu, mu**2 / var if var > 0 else 1e6])


class Weibull(Family):
    name = "weibull"
    param_names = ("scale", "shape")
    links = (LOG, LOG)
    support = POSITIVE

    def nll(self, y, theta):
        lam, kk = _cols(theta, 2)
        return -np.log(kk) + kk * np.log(lam) - (kk - 1.0) * np.log(y) + (y / lam) ** kk

    def derivatives(self, y, theta, k):
        lam, kk = _cols(theta, 2)
        log_ratio = np.log(y) - np.log(lam)
        t = np.exp(kk * log_ratio)
        if k == 0:
            return kk * (1.0 - t), kk**2 * t
        a = kk * log_ratio
        return -1.0 - a + a * t, -a + a * t + a * a * t

    def cdf(self, y, theta):
        lam, kk = _cols(theta, 2)
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return -np.expm1(-((y / lam) ** kk))

    def quantile(self, p, theta):
        lam, kk = _cols(theta, 2)
        return lam * (-np.log1p(-np.asarray(p, dtype=float))) ** (1.0 / kk)

    def sample(self, theta, rng, size=None):
        lam, kk = _cols(theta, 2)
        return lam * rng.weibull(kk, size=size)

    def mean(self, theta):
        lam, kk = _cols(theta, 2)
        return lam * special.gamma(1.0 + 1.0 / kk)

    def variance(self, theta):
        lam, kk = _cols(theta, 2)
        return lam**2 * (special.gamma(1.0 + 2.0 / kk) - special.gamma(1.0 + 1.0 / kk) ** 2)

    def start(self, y, w):
        ly = np.log(y)
        m = np.average(ly, weights=w)
        sd = math.sqrt(np.average((ly - m) ** 2, weights=w))
        shape = math.pi / (math.sqrt(6.0) * sd) if sd > 0 else 1e3
        return np.array([math.exp(m + np.euler_gamma / shape), shape])


class StudentT(Family):
    """Location-scale t with ``nu = 2 + exp(eta_3)`` so the variance exists."""

    name = "studentt"
    param_names = ("mu", "sigma", "nu")
    links = (IDENTITY, LOG, Link("log"))
    support = REAL
    floors = {1: SIGMA_FLOOR}
    NU_OFFSET = 2.0
    NU_EPS = 1e-6  # nu never gets closer than this to the offset

    def to_theta(self, eta):
        eta = np.asarray(eta, dtype=float)
        theta = super().to_theta(eta)
        theta[..., 2] = self.NU_OFFSET + np.maximum(np.exp(eta[..., 2]), self.NU_EPS)
        return theta

    def to_eta(self, theta):
        theta = np.asarray(theta, dtype=float)
        eta = super().to_eta(theta)
        eta[..., 2] = np.log(theta[..., 2] - self.NU_OFFSET)
        return eta

    def check_params(self, theta):
        super().check_params(theta)
        if np.any(np.asarray(theta)[..., 2] <= self.NU_OFFSET):
            raise InvalidParams("studentt: nu must exceed 2")

    def nll(self, y, theta):
        mu, sigma, nu = _cols(theta, 3)
        z = (y - mu) / sigma
        return (
            special.gammaln(0.5 * nu)
            - special.gammaln(0.5 * (nu + 1.0))
            + 0.5 * np.log(nu * math.pi)
            + np.log(sigma)
            + 0.5 * (nu + 1.0) * np.log1p(z * z / nu)
        )

    def derivatives(self, y, theta, k):
        mu, sigma, nu = _cols(theta, 3)
        r = y - mu
        if k == 0:
            d = nu * sigma**2 + r * r
            return -(nu + 1.0) * r / d, (nu + 1.0) * (nu * sigma**2 - r * r) / d**2
        w = (r / sigma) ** 2
        if k == 1:
            return 1.0 - (nu + 1.0) * w / (nu + w), 2.0 * (nu + 1.0) * nu * w / (nu + w) ** 2
        e = nu - self.NU_OFFSET
        d_nu = (
            0.5 * (special.digamma(0.5 * nu) - special.digamma(0.5 * (nu + 1.0)))
            + 0.5 / nu
            + 0.5 * np.log1p(w / nu)
            - (nu + 1.0) * w / (2.0 * nu * (nu + w))
        )
        den = nu * nu + nu * w
        dq = (den - (nu + 1.0) * (2.0 * nu + w)) / den**2
        d2_nu = (
            0.25 * (special.polygamma(1, 0.5 * nu) - special.polygamma(1, 0.5 * (nu + 1.0)))
            - 0.5 / nu**2
            - w / (2.0 * nu * (nu + w))
            - 0.5 * w * dq
        )
        return e * d_nu, e * d_nu + e * e * d2_nu

    def cdf(self, y, theta):
        mu, sigma, nu = _cols(theta, 3)
        return special.stdtr(nu, (y - mu) / sigma)

    def quantile(self, p, theta):
        return self._bisect(p, theta)

    def sample(self, theta, rng, size=None):
        mu, sigma, nu = _cols(theta, 3)
        return mu + sigma * rng.standard_t(nu, size=size)

    def mean(self, theta):
        return _cols(theta, 3)[0]

    def variance(self, theta):
        mu, sigma, nu = _cols(theta, 3)
        return sigma**2 * nu / (nu - 2.0)

    def start(self, y, w):
        mu = float(np.median(y))
        sd = math.sqrt(np.average((y - np.average(y, weights=w)) ** 2, weights=w))
        nu = 10.0
        return np.array([mu, max(sd * math.sqrt((nu - 2.0) / nu), SIGMA_FLOOR), nu])


class Poisson(Family):
    name = "poisson"
    param_names = ("rate",)
    links = (LOG,)
    support = COUNT
    discrete = True

    def nll(self, y, theta):
        (lam,) = _cols(theta, 1)
        return lam - special.xlogy(y, lam) + special.gammaln(np.asarray(y, dtype=float) + 1.0)

    def derivatives(self, y, theta, k):
        (lam,) = _cols(theta, 1)
        shape = np.broadcast(y, lam).shape
        return np.broadcast_to(lam - y, shape).copy(), np.broadcast_to(lam, shape).copy()

    def cdf(self, y, theta):
        (lam,) = _cols(theta, 1)
        y = np.floor(np.asarray(y, dtype=float))
        return np.where(y >= 0, special.pdtr(np.maximum(y, 0.0), lam), 0.0)

    def quantile(self, p, theta):
        return self._integer_search(p, theta)

    def sample(self, theta, rng, size=None):
        (lam,) = _cols(theta, 1)
        return np.asarray(rng.poisson(lam, size=size), dtype=float)

    def mean(self, theta):
        return _cols(theta, 1)[0]

    def variance(self, theta):
        return _cols(theta, 1)[0]

    def closed_form_mle(self, y, w):
        return np.array([max(np.average(y, weights=w), 1e-10)])

    start = closed_form_mle


class NegativeBinomial(Family):
    """NB2: mean ``mu``, dispersion ``alpha``, variance ``mu + alpha mu^2``."""

    name = "negbinomial"
    param_names = ("mu", "alpha")
    links = (LOG, LOG)
    support = COUNT
    discrete = True

    def nll(self, y, theta):
        mu, alpha = _cols(theta, 2)
        r = 1.0 / alpha
        y = np.asarray(y, dtype=float)
        return -(
            special.gammaln(y + r)
            - special.gammaln(r)
            - special.gammaln(y + 1.0)
            + r * np.log(r / (r + mu))
            + special.xlogy(y, mu / (r + mu))
        )

    def derivatives(self, y, theta, k):
        mu, alpha = _cols(theta, 2)
        r = 1.0 / alpha
        if k == 0:
            return r * (mu - y) / (r + mu), r * mu * (r + y) / (r + mu) ** 2
        d_r = -special.digamma(y + r) + special.digamma(r) - np.log(r / (r + mu)) + (y - mu) / (r + mu)
        d2_r = (
            -special.polygamma(1, y + r)
            + special.polygamma(1, r)
            - 1.0 / r
            + 1.0 / (r + mu)
            - (y - mu) / (r + mu) ** 2
        )
        return -r * d_r, r * d_r + r * r * d2_r

    def cdf(self, y, theta):
        mu, alpha = _cols(theta, 2)
        r = 1.0 / alpha
        y = np.floor(np.asarray(y, dtype=float))
        return np.where(y >= 0, special.betainc(r, np.maximum(y, 0.0) + 1.0, r / (r + mu)), 0.0)

    def quantile(self, p, theta):
        return self._integer_search(p, theta)

    def sample(self, theta, rng, size=None):
        mu, alpha = _cols(theta, 2)
        r = 1.0 / alpha
        return np.asarray(rng.negative_binomial(r, r / (r + mu), size=size), dtype=float)

    def mean(self, theta):
        return _cols(theta, 2)[0]

    def variance(self, theta):
        mu, alpha = _cols(theta, 2)
        return mu + alpha * mu**2

    def start(self, y, w):
        mu = max(np.average(y, weights=w), 1e-3)
        var = np.average((y - mu) ** 2, weights=w)
        return np.array([mu, max((var - mu) / mu**2, 1e-2)])


class Expectile(Family):
    """Asymmetric least squares at level ``tau``; a loss, not a distribution."""

    name = "expectile"
    param_names = ("expectile",)
    links = (IDENTITY,)
    support = REAL

    def __init__(self, tau: float = 0.5):
        if not 0.0 < tau < 1.0:
            raise BadTau(f"tau must lie in (0, 1), got {tau}")
        self.tau = float(tau)

    def __repr__(self):
        return f"Expectile(tau={self.tau})"

    def to_dict(self):
        return {"name": self.name, "tau": self.tau}

    def _weight(self, y, yhat):
        return np.where(y > yhat, self.tau, 1.0 - self.tau)

    def nll(self, y, theta):
        (yhat,) = _cols(theta, 1)
        return self._weight(y, yhat) * (y - yhat) ** 2

    def derivatives(self, y, theta, k):
        (yhat,) = _cols(theta, 1)
        w = self._weight(y, yhat)
        return 2.0 * w * (yhat - y), 2.0 * w

    def _no_distribution(self, *args, **kwargs):
        raise InvalidParams("the expectile loss does not define a predictive distribution")

    cdf = quantile = sample = variance = _no_distribution

    def mean(self, theta):
        return _cols(theta, 1)[0]

    def closed_form_mle(self, y, w):
        return np.array([np.average(y, weights=w)])

    start = closed_form_mle


FAMILIES: dict[str, type[Family]] = {
    cls.name: cls for cls in (Normal, LogNormal, Gamma, Weibull, StudentT, Poisson, NegativeBinomial, Expectile)
}
FAMILY_NAMES = tuple(FAMILIES)
DISTRIBUTION_NAMES = tuple(n for n in FAMILY_NAMES if n != "expectile")


def get_family(name: str, **kwargs) -> Family:
    try:
        cls = FAMILIES[name.lower()]
    except KeyError:
        raise UnknownFamily(f"unknown family {name!r}; valid names: {', '.join(FAMILY_NAMES)}") from None
    return cls(**kwargs)


def family_from_dict(d: dict) -> Family:
    d = dict(d)
    return get_family(d.pop("name"), **d)


# -- scalar-style API over ParamVector ------------------------------------------


def _theta(family: Family, pv: ParamVector) -> np.ndarray:
    theta = np.asarray(pv.theta, dtype=float)
    if not isinstance(family, Expectile):
        family.check_params(theta)
    elif not np.all(np.isfinite(theta)):
        raise InvalidParams("non-finite parameters")
    return theta


def nll(family: Family, y, pv: ParamVector, weight=1.0):
    """Weighted negative log-likelihood of ``y`` under ``pv``."""
    family.check_support(y)
    return weight * family.nll(y, _theta(family, pv))


def grad_hess(family: Family, y, pv: ParamVector, k: int, weight=1.0, clamp: bool = True):
    """Weighted derivative pair of the NLL with respect to ``eta_k``.

    The Hessian is floored at :data:`HESSIAN_FLOOR` unless ``clamp`` is off.
    """
    if not 0 <= k < family.n_params:
        raise IndexError(f"{family.name} has {family.n_params} parameters, got index {k}")
    family.check_support(y)
    g, h = family.derivatives(y, _theta(family, pv), k)
    g = weight * g
    h = weight * h
    if clamp:
        h = np.maximum(h, HESSIAN_FLOOR)
    return g, h


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise BadProbability(f"probabilities must lie in (0, 1), got {p}")
    return p


def cdf(family: Family, y, pv: ParamVector):
    return family.cdf(y, _theta(family, pv))


def quantile(family: Family, p, pv: ParamVector):
    return family.quantile(_check_prob(p), _theta(family, pv))


def sample(family: Family, pv: ParamVector, seed: int, size=None):
    return family.sample(_theta(family, pv), np.random.default_rng(seed), size=size)


def expectile_loss(tau: float, y, yhat):
    """Asymmetric squared loss with its gradient and Hessian in ``yhat``.

    Ties (``y == yhat``) use the ``1 - tau`` weight.
    """
    fam = Expectile(tau)
    theta = np.asarray(yhat, dtype=float)[..., None]
    g, h = fam.derivatives(y, theta, 0)
    return fam.nll(y, theta), g, h


def unconditional_mle(family: Family, y, weights=None, *, max_iter: int = 200, tol: float = 1e-8) -> ParamVector:
    """Covariate-free maximum-likelihood fit, returned on both scales.

    Families without a closed form are fitted by cyclic one-dimensional
    Newton steps on the weighted mean NLL, with step halving.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("unconditional MLE needs at least two observations")
    family.check_support(y)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    closed = family.closed_form_mle(y, w)
    if closed is not None:
        return ParamVector.from_theta(family, closed)

    def objective(eta):
        return float(np.sum(w * family.nll(y, family.to_theta(eta))))

    def gradient(eta):
        theta = family.to_theta(eta)
        return np.array([np.sum(w * family.derivatives(y, theta, k)[0]) for k in range(family.n_params)])

    eta = family.to_eta(family.start(y, w))
    f = objective(eta)
    for _ in range(max_iter):
        for k in range(family.n_params):
            theta = family.to_theta(eta)
            g, h = family.derivatives(y, theta, k)
            gk, hk = np.sum(w * g), np.sum(w * h)
            step = -gk / max(hk, HESSIAN_FLOOR)
            for _ in range(60):
                trial = eta.copy()
                trial[k] = np.clip(eta[k] + step, -50.0, 50.0)
                f_trial = objective(trial)
                if np.isfinite(f_trial) and f_trial <= f:
                    eta, f = trial, f_trial
                    break
                step *= 0.5
        if np.max(np.abs(gradient(eta))) < tol:
            break
    else:
        norm = np.max(np.abs(gradient(eta)))
        if norm > 1e-4:
            raise NoConvergence(f"{family.name}: MLE gradient norm {norm:.3g} after {max_iter} sweeps")
    return ParamVector.from_eta(family, eta)
