"""Newton boosting of every distributional parameter.

Fitting runs in two stages. First each parameter gets its own ensemble while
the other parameters stay at their unconditional maximum-likelihood values.
Then the ensembles are refined cyclically, one parameter after another, each
seeing the current predictions of all the others, until the relative change
in training deviance falls below a tolerance.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .data import Dataset, EncoderState, FeatureMeta, encode_categoricals
from .distributions import (
    HESSIAN_FLOOR,
    Expectile,
    Family,
    ParamVector,
    _check_prob,
    family_from_dict,
    unconditional_mle,
)
from .errors import BadTau, DataError, ModelFormatError, TooFewRows, WidthMismatch
from .tree import TreeConfig, TreeNode, fit_tree, predict_tree, presort, tree_from_dict, tree_to_dict

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostConfig:
    n_iters_step1: int = 100
    shrinkage: float = 0.02
    n_iters_per_cycle: int = 25
    epsilon: float = 1e-5
    max_cycles: int = 10
    tree: TreeConfig = TreeConfig()
    seed: int = 0
    n_threads: int = 1

    def __post_init__(self):
        if self.n_iters_step1 < 1 or self.n_iters_per_cycle < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in (0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")


@dataclass
class Ensemble:
    base_eta: float
    trees: list[TreeNode] = field(default_factory=list)
    shrinkage: float = 0.1

    def predict(self, X: np.ndarray) -> np.ndarray:
        eta = np.full(X.shape[0], self.base_eta)
        for tree in self.trees:
            eta += self.shrinkage * predict_tree(tree, X)
        return eta

    def to_dict(self) -> dict:
        return {
            "base_eta": self.base_eta,
            "shrinkage": self.shrinkage,
            "trees": [tree_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        return cls(float(d["base_eta"]), [tree_from_dict(t) for t in d["trees"]], float(d["shrinkage"]))


@dataclass
class LssModel:
    family: Family
    ensembles: list[Ensemble]
    encoder: EncoderState | None = None
    features: tuple[FeatureMeta, ...] = ()
    training_log: list[dict] = field(default_factory=list)
    step1_nll: list[list[float]] = field(default_factory=list)
    stop_reason: str = ""
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ensembles) != self.family.n_params:
            raise ValueError(f"{self.family.name} needs {self.family.n_params} ensembles, got {len(self.ensembles)}")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def deviances(self) -> list[float]:
        return [r["deviance"] for r in self.training_log]

    def predict_eta(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, self.n_features if self.features else None)
        return np.column_stack([e.predict(X) for e in self.ensembles])


@dataclass
class ExpectileModel:
    taus: list[float]
    ensembles: list[Ensemble]
    encoder: EncoderState | None = None
    features: tuple[FeatureMeta, ...] = ()
    config: dict = field(default_factory=dict)

    def predict(self, rows) -> np.ndarray:
        """Matrix of shape (n_rows, len(taus))."""
        X = _rows_matrix(self, rows)
        return np.column_stack([e.predict(X) for e in self.ensembles])


class PredictiveDistribution:
    """Per-row fitted parameters of one family."""

    def __init__(self, family: Family, eta: np.ndarray):
        self.family = family
        self.eta = np.asarray(eta, dtype=float)
        self.theta = family.to_theta(self.eta)

    def __len__(self):
        return self.eta.shape[0]

    def __getitem__(self, i) -> ParamVector:
        return ParamVector(self.eta[i], self.theta[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def cdf(self, y):
        return self.family.cdf(np.asarray(y, dtype=float), self.theta)

    def pdf(self, y):
        return self.family.pdf(np.asarray(y, dtype=float), self.theta)

    def nll(self, y):
        return self.family.nll(np.asarray(y, dtype=float), self.theta)

    def mean(self):
        return self.family.mean(self.theta)

    def variance(self):
        return self.family.variance(self.theta)

    def quantile(self, probs) -> np.ndarray:
        """Quantiles with shape (n_rows, len(probs))."""
        probs = np.atleast_1d(_check_prob(probs))
        return np.column_stack([self.family.quantile(p, self.theta) for p in probs])

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.family.sample(self.theta[:, None, :], rng, size=(len(self), n_samples))


# -- fitting -----------------------------------------------------------------


def _check_width(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if n_features is not None and X.shape[1] != n_features:
        raise WidthMismatch(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def _xyw(data: Dataset):
    if data.response is None:
        raise DataError("training data needs a response")
    if not data.encoded:
        raise DataError("categorical columns must be encoded before fitting")
    w = np.ones(data.n_rows) if data.weights is None else data.weights
    return data.features, data.response, w


def deviance(family: Family, y, eta, w=None) -> float:
    """Global deviance, -2 times the (weighted) log-likelihood."""
    nll = family.nll(y, family.to_theta(eta))
    return float(2.0 * np.sum(nll if w is None else w * nll))


def boost_parameter(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    family: Family,
    eta: np.ndarray,
    k: int,
    ensemble: Ensemble,
    n_iters: int,
    tree_cfg: TreeConfig,
    orders: list[np.ndarray] | None = None,
    n_threads: int = 1,
    trace: list[float] | None = None,
) -> None:
    """Append ``n_iters`` Newton trees for parameter ``k`` to ``ensemble``.

    ``eta`` holds the current raw predictions of all parameters and is
    updated in place (column ``k`` only). When ``trace`` is given, the
    weighted training NLL after every tree is appended to it.
    """
    if orders is None:
        orders = presort(X)
    for _ in range(n_iters):
        theta = family.to_theta(eta)
        g, h = family.derivatives(y, theta, k)
        g = w * g
        h = np.maximum(w * h, HESSIAN_FLOOR)
        tree = fit_tree(X, g, h, tree_cfg, orders, n_threads)
        ensemble.trees.append(tree)
        eta[:, k] += ensemble.shrinkage * predict_tree(tree, X)
        if trace is not None:
            trace.append(float(np.sum(w * family.nll(y, family.to_theta(eta)))))


def fit_step1(data: Dataset, family: Family, cfg: BoostConfig = BoostConfig()) -> LssModel:
    """Fit one ensemble per parameter with the other parameters frozen at their MLE."""
    X, y, w = _xyw(data)
    family.check_support(y)
    if data.n_rows < 2 * cfg.tree.min_samples_leaf:
        raise TooFewRows(f"need at least {2 * cfg.tree.min_samples_leaf} rows, got {data.n_rows}")
    mle = unconditional_mle(family, y, w)
    orders = presort(X)
    ensembles, traces, final = [], [], np.empty((data.n_rows, family.n_params))
    for k in range(family.n_params):
        eta = np.tile(mle.eta, (data.n_rows, 1))
        ens = Ensemble(float(mle.eta[k]), [], cfg.shrinkage)
        trace = [float(np.sum(w * family.nll(y, family.to_theta(eta))))]
        boost_parameter(X, y, w, family, eta, k, ens, cfg.n_iters_step1, cfg.tree, orders, cfg.n_threads, trace)
        if np.any(np.diff(trace) > 1e-9 * np.abs(trace[:-1])):
            log.warning("step 1: training NLL increased for parameter %s", family.param_names[k])
        ensembles.append(ens)
        traces.append(trace)
        final[:, k] = eta[:, k]
    dev = deviance(family, y, final, w)
    return LssModel(
        family,
        ensembles,
        features=data.meta,
        training_log=[{"cycle": 0, "deviance": dev, "rel_diff": None, "flag": "step1"}],
        step1_nll=traces,
        stop_reason="step1",
        config=config_to_dict(cfg),
    )


def fit_step2(model: LssModel, data: Dataset, cfg: BoostConfig = BoostConfig()) -> LssModel:
    """Cyclic refinement until the relative deviance change drops below epsilon.

    Within a cycle the parameters are updated in order, each one using the
    freshly updated predictions of the parameters before it. Existing trees
    are never modified. A cycle that raises the deviance is kept but ends the
    run, flagged ``"deviance_increase"`` in the training log.
    """
    X, y, w = _xyw(data)
    model = copy.deepcopy(model)
    if cfg.max_cycles == 0:
        return model
    family = model.family
    orders = presort(X)
    eta = model.predict_eta(X)
    prev = deviance(family, y, eta, w)
    reason = "max_cycles"
    for q in range(1, cfg.max_cycles + 1):
        for k, ens in enumerate(model.ensembles):
            boost_parameter(X, y, w, family, eta, k, ens, cfg.n_iters_per_cycle, cfg.tree, orders, cfg.n_threads)
        dev = deviance(family, y, eta, w)
        diff = abs(dev - prev) / abs(prev) if prev != 0 else abs(dev - prev)
        record = {"cycle": q, "deviance": dev, "rel_diff": diff, "flag": ""}
        model.training_log.append(record)
        if dev > prev:
            record["flag"] = reason = "deviance_increase"
            log.warning("step 2: deviance increased in cycle %d (%.6g -> %.6g)", q, prev, dev)
            break
        prev = dev
        if diff < cfg.epsilon:
            record["flag"] = reason = "converged"
            break
    else:
        model.training_log[-1]["flag"] = "max_cycles"
    model.stop_reason = reason
    model.config = config_to_dict(cfg)
    return model


def fit(
    data: Dataset,
    family: Family,
    cfg: BoostConfig = BoostConfig(),
    smoothing: float = 1.0,
) -> LssModel:
    """Encode categoricals, then run both fitting stages."""
    encoded, encoder = encode_categoricals(data, smoothing)
    model = fit_step2(fit_step1(encoded, family, cfg), encoded, cfg)
    model.encoder = encoder
    return model


def fit_expectiles(
    data: Dataset,
    taus: Sequence[float],
    cfg: BoostConfig = BoostConfig(),
    smoothing: float = 1.0,
) -> ExpectileModel:
    """One independent ensemble per expectile level, started at the sample mean.

    Nothing prevents the fitted expectiles from crossing at individual rows.
    """
    taus = [float(t) for t in taus]
    if not taus or any(not 0.0 < t < 1.0 for t in taus):
        raise BadTau(f"expectile levels must lie in (0, 1), got {taus}")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise BadTau("expectile levels must be strictly increasing")
    encoded, encoder = encode_categoricals(data, smoothing)
    X, y, w = _xyw(encoded)
    orders = presort(X)
    base = float(np.average(y, weights=w))
    ensembles = []
    for tau in taus:
        eta = np.full((encoded.n_rows, 1), base)
        ens = Ensemble(base, [], cfg.shrinkage)
        boost_parameter(X, y, w, Expectile(tau), eta, 0, ens, cfg.n_iters_step1, cfg.tree, orders, cfg.n_threads)
        ensembles.append(ens)
    return ExpectileModel(taus, ensembles, encoder, encoded.meta, config_to_dict(cfg))


# -- prediction ----------------------------------------------------------------


def _rows_matrix(model, rows) -> np.ndarray:
    if isinstance(rows, Dataset):
        if model.features and [m.name for m in rows.meta] != [m.name for m in model.features]:
            raise WidthMismatch("feature columns differ from the ones the model was trained on")
        if not rows.encoded:
            if model.encoder is None:
                raise DataError("model has no categorical encoder")
            rows = model.encoder.transform(rows)
        rows = rows.features
    return _check_width(rows, len(model.features) if model.features else None)


def predict_params(model: LssModel, rows) -> PredictiveDistribution:
    """Predicted parameters for a :class:`Dataset` or an encoded feature matrix."""
    return PredictiveDistribution(model.family, model.predict_eta(_rows_matrix(model, rows)))


def predict_quantiles(model: LssModel, rows, probs) -> np.ndarray:
    return predict_params(model, rows).quantile(probs)


def interval_probs(level: float) -> tuple[float, float]:
    """Tail probabilities of a central interval; 0.9 gives exactly (0.05, 0.95)."""
    _check_prob(level)
    # rounding strips representation noise such as 0.04999999999999999
    return round((1.0 - level) / 2.0, 15), round((1.0 + level) / 2.0, 15)


def predict_interval(model: LssModel, rows, level: float) -> tuple[np.ndarray, np.ndarray]:
    lo_p, hi_p = interval_probs(level)
    q = predict_quantiles(model, rows, [lo_p, hi_p])
    return q[:, 0], q[:, 1]


def sample_predictive(model: LssModel, rows, n_samples: int, seed: int) -> np.ndarray:
    return predict_params(model, rows).sample(n_samples, seed)


# -- persistence -----------------------------------------------------------------


def config_to_dict(cfg: BoostConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> BoostConfig:
    d = dict(d)
    d["tree"] = TreeConfig(**d.get("tree", {}))
    return BoostConfig(**d)


def model_to_dict(model: LssModel | ExpectileModel) -> dict:
    common = {
        "format_version": FORMAT_VERSION,
        "generator": f"distboost {__version__}",
        "features": [m.to_dict() for m in model.features],
        "encoder": None if model.encoder is None else model.encoder.to_dict(),
        "config": model.config,
    }
    if isinstance(model, ExpectileModel):
        return {
            "kind": "expectile",
            "family": {"name": "expectile"},
            "links": ["identity"],
            **common,
            "expectiles": [{"tau": t, **e.to_dict()} for t, e in zip(model.taus, model.ensembles)],
        }
    fam = model.family
    return {
        "kind": "lss",
        "family": fam.to_dict(),
        "links": [l.kind for l in fam.links],
        **common,
        "parameters": [{"name": n, **e.to_dict()} for n, e in zip(fam.param_names, model.ensembles)],
        "training_log": model.training_log,
        "step1_nll": model.step1_nll,
        "stop_reason": model.stop_reason,
    }


def model_from_dict(d: dict) -> LssModel | ExpectileModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {d.get('format_version')!r}")
    try:
        features = tuple(FeatureMeta.from_dict(m) for m in d["features"])
        encoder = None if d["encoder"] is None else EncoderState.from_dict(d["encoder"])
        if d["kind"] == "expectile":
            ex = d["expectiles"]
            return ExpectileModel(
                [float(e["tau"]) for e in ex],
                [Ensemble.from_dict(e) for e in ex],
                encoder,
                features,
                d.get("config", {}),
            )
        return LssModel(
            family_from_dict(d["family"]),
            [Ensemble.from_dict(p) for p in d["parameters"]],
            encoder,
            features,
            list(d["training_log"]),
            [list(t) for t in d.get("step1_nll", [])],
            d.get("stop_reason", ""),
            d.get("config", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def dumps_model(model: LssModel | ExpectileModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, allow_nan=False) + "\n"


def save_model(model: LssModel | ExpectileModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: str | Path) -> LssModel | ExpectileModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return model_from_dict(d)
