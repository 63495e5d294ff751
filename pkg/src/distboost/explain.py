"""Feature importance and partial dependence per distributional parameter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .booster import Ensemble, LssModel, _rows_matrix
from .data import Dataset
from .errors import CategoricalUnsupported, DataError
from .tree import gain_by_feature

GAIN = "gain"
PERMUTATION = "permutation"


@dataclass
class ImportanceReport:
    param_index: int
    method: str
    scores: dict[str, float] = field(default_factory=dict)

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))


def _feature_names(model) -> list[str]:
    return [m.name for m in model.features]


def ensemble_gain(ensemble: Ensemble, names: list[str]) -> dict[str, float]:
    """Total split gain per feature, normalised to sum to one (all zero if no splits)."""
    totals = np.zeros(len(names))
    for tree in ensemble.trees:
        for j, gain in gain_by_feature(tree).items():
            totals[j] += gain
    s = totals.sum()
    if s > 0:
        totals = totals / s
    return {n: float(v) for n, v in zip(names, totals)}


def importance_gain(model: LssModel, k: int) -> ImportanceReport:
    return ImportanceReport(k, GAIN, ensemble_gain(model.ensembles[k], _feature_names(model)))


def importance_permutation(
    model: LssModel,
    data: Dataset | np.ndarray,
    k: int,
    n_repeats: int = 5,
    seed: int = 0,
    *,
    y: np.ndarray | None = None,
    permutation: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> ImportanceReport:
    """Mean increase in NLL when one column is shuffled for ensemble ``k`` only.

    The other parameters keep predicting from the intact data. Negative
    deltas are reported unchanged. ``permutation`` overrides the shuffle;
    it receives a generator and the row count and returns row indices.
    """
    if isinstance(data, Dataset):
        y = data.response if y is None else y
    if y is None:
        raise DataError("permutation importance needs a response")
    X = _rows_matrix(model, data)
    y = np.asarray(y, dtype=float)
    fam = model.family
    eta = model.predict_eta(X)
    base = float(np.mean(fam.nll(y, fam.to_theta(eta))))
    if permutation is None:
        permutation = lambda rng, n: rng.permutation(n)  # noqa: E731
    scores = {}
    for j, name in enumerate(_feature_names(model)):
        rng = np.random.default_rng([seed, j])
        deltas = []
        for _ in range(n_repeats):
            Xp = np.array(X, order="F")
            Xp[:, j] = X[permutation(rng, X.shape[0]), j]
            eta_p = eta.copy()
            eta_p[:, k] = model.ensembles[k].predict(Xp)
            deltas.append(float(np.mean(fam.nll(y, fam.to_theta(eta_p)))) - base)
        scores[name] = float(np.mean(deltas))
    return ImportanceReport(k, PERMUTATION, scores)


@dataclass
class PartialDependence:
    feature: str
    param_index: int
    grid: np.ndarray
    values: np.ndarray
    moment: str | None = None
    moment_values: np.ndarray | None = None


def partial_dependence(
    model: LssModel,
    data: Dataset | np.ndarray,
    k: int,
    feature: str | int,
    grid_size: int = 20,
    moment: str | None = None,
) -> PartialDependence:
    """Average predicted parameter ``k`` (natural scale) over an even grid of one feature.

    ``moment`` may be ``"mean"`` or ``"variance"`` to also average that
    moment of the predictive distribution at each grid point.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if moment not in (None, "mean", "variance"):
        raise ValueError(f"unknown moment {moment!r}")
    names = _feature_names(model)
    j = names.index(feature) if isinstance(feature, str) else int(feature)
    if model.features[j].is_categorical:
        raise CategoricalUnsupported(f"feature {names[j]!r} is categorical")
    X = _rows_matrix(model, data)
    grid = np.linspace(X[:, j].min(), X[:, j].max(), grid_size)
    fam = model.family
    values, moments = np.empty(grid_size), np.empty(grid_size)
    Xg = np.array(X, order="F")
    for i, v in enumerate(grid):
        Xg[:, j] = v
        theta = fam.to_theta(model.predict_eta(Xg))
        values[i] = np.mean(theta[:, k])
        if moment == "mean":
            moments[i] = np.mean(fam.mean(theta))
        elif moment == "variance":
            moments[i] = np.mean(fam.variance(theta))
    return PartialDependence(names[j], k, grid, values, moment, moments if moment else None)
