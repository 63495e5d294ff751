"""Heteroskedastic benchmark: Normal response whose variance steps with x."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import Dataset, FeatureMeta


@dataclass(frozen=True)
class SimSpec:
    n_train: int = 7000
    n_test: int = 3000
    n_noise: int = 10
    seed: int = 42

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1 or self.n_noise < 0:
            raise ValueError("sample sizes must be positive and n_noise non-negative")


MEAN = 10.0


def true_variance(x):
    """1 + 4*[0.3 < x < 0.5] + 2*[x > 0.7], strict on every boundary."""
    x = np.asarray(x, dtype=float)
    return 1.0 + 4.0 * ((x > 0.3) & (x < 0.5)) + 2.0 * (x > 0.7)


def truth_quantile(p, x):
    """Quantile of the generating distribution at probability ``p`` given ``x``."""
    return MEAN + special.ndtri(p) * np.sqrt(true_variance(x))


def feature_names(n_noise: int) -> list[str]:
    return ["x"] + [f"X{j}" for j in range(1, n_noise + 1)]


def _draw(rng: np.random.Generator, n: int, n_noise: int) -> Dataset:
    x = rng.uniform(0.0, 1.0, n)
    noise = rng.uniform(0.0, 1.0, (n, n_noise))
    y = rng.normal(MEAN, np.sqrt(true_variance(x)))
    meta = tuple(FeatureMeta(name) for name in feature_names(n_noise))
    return Dataset(np.column_stack([x, noise]), y, meta, encoded=True)


def simulate(spec: SimSpec = SimSpec()):
    """Draw train and test sets; returns ``(train, test, truth)``.

    ``x`` is the first feature column; the noise columns follow it. ``truth``
    is :func:`truth_quantile`.
    """
    rng = np.random.default_rng(spec.seed)
    train = _draw(rng, spec.n_train, spec.n_noise)
    test = _draw(rng, spec.n_test, spec.n_noise)
    return train, test, truth_quantile
