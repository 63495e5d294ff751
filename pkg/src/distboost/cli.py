"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data or model error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .booster import (
    BoostConfig,
    ExpectileModel,
    config_from_dict,
    config_to_dict,
    deviance,
    fit,
    fit_expectiles,
    fit_step1,
    fit_step2,
    interval_probs,
    load_model,
    predict_params,
    save_model,
)
from .data import encode_categoricals, load_csv, split_train_test, write_csv
from .distributions import DISTRIBUTION_NAMES, FAMILY_NAMES, get_family
from .errors import ConfigError, DataError, DistBoostError
from .explain import importance_gain, importance_permutation, partial_dependence
from .scoring import gaic_select, quantile_residuals, score
from .simulation import SimSpec, feature_names, simulate, truth_quantile
from .tree import TreeConfig

log = logging.getLogger("distboost")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

BOOST_FLAGS = {
    "n_iters_step1": int,
    "shrinkage": float,
    "n_iters_per_cycle": int,
    "epsilon": float,
    "max_cycles": int,
    "seed": int,
}
TREE_FLAGS = {"max_depth": int, "min_samples_leaf": int, "reg_lambda": float, "gamma": float}


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _fmt_p(p: float) -> str:
    return repr(float(p))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distboost", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="TOML file with defaults; flags override it")
    parser.add_argument("--threads", type=int, help="worker cap for split search (0 = auto; env DISTBOOST_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model")
    p.add_argument("--data", type=Path)
    p.add_argument("--response")
    p.add_argument("--family", help=f"one of {', '.join(FAMILY_NAMES)}")
    p.add_argument("--out", type=Path, help="model JSON path")
    p.add_argument("--log", type=Path, help="training log CSV (default: next to the model)")
    p.add_argument("--categorical", type=_names, help="comma-separated categorical columns")
    p.add_argument("--weight", help="column of positive row weights")
    p.add_argument("--taus", type=_floats, help="expectile levels (family expectile)")
    p.add_argument("--smoothing", type=float, help="target-statistic smoothing (default 1.0)")
    p.add_argument("--holdout", type=float, help="hold out this fraction to cap the step-2 cycle count")
    for name, typ in {**BOOST_FLAGS, **TREE_FLAGS}.items():
        p.add_argument("--" + name.replace("_", "-"), type=typ, dest=name)

    p = sub.add_parser("predict", help="predict parameters, quantiles, intervals and samples")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--quantiles", type=_floats, default=[])
    p.add_argument("--interval", type=_floats, default=[], help="central interval levels, e.g. 0.9")
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="score a model on labelled data")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--out", type=Path, required=True, help="score report JSON")
    p.add_argument("--residuals", type=Path, help="quantile residual CSV")
    p.add_argument("--taus", type=_floats, default=[0.05, 0.5, 0.95])
    p.add_argument("--crps-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("select-family", help="rank candidate families by GAIC")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--candidates", type=_names, default=list(DISTRIBUTION_NAMES))
    p.add_argument("--penalty", type=float, default=2.0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("simulate", help="write the heteroskedastic benchmark")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-train", type=int, default=7000)
    p.add_argument("--n-test", type=int, default=3000)
    p.add_argument("--n-noise", type=int, default=10)
    p.add_argument("--quantiles", type=_floats, default=[0.05, 0.5, 0.95])
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("explain", help="feature importance and partial dependence")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--response", help="needed for permutation importance")
    p.add_argument("--param", default="0", help="parameter index or name")
    p.add_argument("--method", choices=["gain", "permutation", "both"], default="gain")
    p.add_argument("--n-repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pdp", type=_names, default=[], help="features for partial dependence")
    p.add_argument("--grid-size", type=int, default=20)
    p.add_argument("--moment", choices=["mean", "variance"])
    p.add_argument("--out-dir", type=Path, default=Path("."))
    return parser


# -- configuration ----------------------------------------------------------------


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DISTBOOST_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"DISTBOOST_THREADS must be an integer, got {env!r}") from None
    return 1


def resolve_train_config(args) -> dict:
    """Merge TOML file values with command-line flags (flags win)."""
    file_cfg: dict = {}
    if args.config is not None:
        try:
            file_cfg = tomllib.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    boost = dict(file_cfg.pop("boost", {}))
    tree = dict(file_cfg.pop("tree", {}))
    run = dict(file_cfg)
    for key in BOOST_FLAGS:
        if getattr(args, key) is not None:
            boost[key] = getattr(args, key)
    for key in TREE_FLAGS:
        if getattr(args, key) is not None:
            tree[key] = getattr(args, key)
    for key in ("data", "response", "family", "out", "log", "categorical", "weight", "taus", "smoothing", "holdout"):
        value = getattr(args, key)
        if value is not None:
            run[key] = str(value) if isinstance(value, Path) else value
    for key in ("data", "response", "family", "out"):
        if not run.get(key):
            raise ConfigError(f"missing required setting {key!r} (flag --{key} or config file)")
    unknown = set(boost) - {f.name for f in dataclasses.fields(BoostConfig)}
    unknown |= set(tree) - {f.name for f in dataclasses.fields(TreeConfig)}
    if unknown:
        raise ConfigError(f"unknown boosting settings: {', '.join(sorted(unknown))}")
    try:
        cfg = config_from_dict({**boost, "tree": tree, "n_threads": _threads(args)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if isinstance(run.get("categorical"), str):
        run["categorical"] = _names(run["categorical"])
    run.setdefault("categorical", [])
    run.setdefault("smoothing", 1.0)
    run.setdefault("weight", None)
    run.setdefault("holdout", None)
    run.setdefault("taus", None)
    run["boost"] = config_to_dict(cfg)
    return run


def _echo_config(run: dict, out_dir: Path, name: str = "run_config.json") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(run, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -----------------------------------------------------------------------


def holdout_cycles(data, family, cfg: BoostConfig, fraction: float) -> int:
    """Step-2 cycle count (at most ``cfg.max_cycles``) minimising holdout deviance."""
    fit_part, valid = split_train_test(data, fraction, cfg.seed)
    fit_part, encoder = encode_categoricals(fit_part)
    valid = encoder.transform(valid)
    model = fit_step1(fit_part, family, cfg)
    one = dataclasses.replace(cfg, max_cycles=1, epsilon=float("inf"))
    best_q = 0
    best = deviance(family, valid.response, model.predict_eta(valid.features))
    for q in range(1, cfg.max_cycles + 1):
        model = fit_step2(model, fit_part, one)
        dev = deviance(family, valid.response, model.predict_eta(valid.features))
        if dev < best:
            best, best_q = dev, q
    return best_q


def cmd_train(args) -> int:
    run = resolve_train_config(args)
    cfg = config_from_dict(run["boost"])
    out = Path(run["out"])
    data = load_csv(run["data"], run["response"], run["categorical"], run["weight"])
    family_name = run["family"].lower()
    if family_name == "expectile":
        taus = run["taus"] or [0.5]
        model = fit_expectiles(data, taus, cfg, run["smoothing"])
        _echo_config(run, out.parent)
        save_model(model, out)
        log.info("wrote %s (%d expectiles)", out, len(taus))
        return EXIT_OK
    family = get_family(family_name)
    if run["holdout"] is not None:
        cycles = holdout_cycles(data, family, cfg, run["holdout"])
        log.info("holdout selected %d step-2 cycles", cycles)
        cfg = dataclasses.replace(cfg, max_cycles=cycles)
        run["boost"] = config_to_dict(cfg)
    model = fit(data, family, cfg, run["smoothing"])
    _echo_config(run, out.parent)
    save_model(model, out)
    log_path = Path(run["log"]) if run.get("log") else out.with_name("training_log.csv")
    rows = model.training_log
    write_csv(
        log_path,
        ["cycle", "deviance", "rel_diff", "flag"],
        [
            [r["cycle"] for r in rows],
            [r["deviance"] for r in rows],
            ["" if r["rel_diff"] is None else r["rel_diff"] for r in rows],
            [r["flag"] for r in rows],
        ],
    )
    log.info("wrote %s and %s (stop reason: %s)", out, log_path, model.stop_reason)
    return EXIT_OK


def _load_features(model, path: Path, response: str | None = None):
    cats = [m.name for m in model.features if m.is_categorical]
    data = load_csv(path, response, cats, feature_cols=[m.name for m in model.features])
    return data


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = _load_features(model, args.data)
    header, cols = [], []
    if isinstance(model, ExpectileModel):
        if args.quantiles or args.interval or args.samples:
            raise ConfigError("expectile models only predict expectiles")
        pred = model.predict(data)
        for j, tau in enumerate(model.taus):
            header.append(f"expectile_{_fmt_p(tau)}")
            cols.append(pred[:, j])
        write_csv(args.out, header, cols)
        return EXIT_OK
    pred = predict_params(model, data)
    for k in range(model.family.n_params):
        header.append(f"theta_{k + 1}")
        cols.append(pred.theta[:, k])
    if args.quantiles:
        q = pred.quantile(args.quantiles)
        for j, p in enumerate(args.quantiles):
            header.append(f"q_{_fmt_p(p)}")
            cols.append(q[:, j])
    for level in args.interval:
        q = pred.quantile(list(interval_probs(level)))
        header += [f"lo_{_fmt_p(level)}", f"hi_{_fmt_p(level)}"]
        cols += [q[:, 0], q[:, 1]]
    if args.samples:
        s = pred.sample(args.samples, args.seed)
        for j in range(args.samples):
            header.append(f"sample_{j + 1}")
            cols.append(s[:, j])
    write_csv(args.out, header, cols)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    if isinstance(model, ExpectileModel):
        raise ConfigError("evaluate needs a distributional model, not an expectile model")
    data = _load_features(model, args.data, args.response)
    pred = predict_params(model, data)
    report = score(pred, data.response, args.taus, args.crps_samples, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    if args.residuals is not None:
        r = quantile_residuals(model.family, pred.theta, data.response, args.seed)
        write_csv(args.residuals, ["row", "residual"], [np.arange(len(r)), r])
    return EXIT_OK


def cmd_select_family(args) -> int:
    data = load_csv(args.data, args.response, feature_cols=[])
    candidates = [get_family(n) for n in args.candidates]
    ranked = gaic_select(data.response, candidates, args.penalty)
    header = ["rank", "family", "n_params", "gaic"]
    cols = [
        list(range(1, len(ranked) + 1)),
        [f.name for f, _ in ranked],
        [f.n_params for f, _ in ranked],
        [g for _, g in ranked],
    ]
    if args.out is not None:
        write_csv(args.out, header, cols)
    for i, (fam, g) in enumerate(ranked, 1):
        print(f"{i}\t{fam.name}\t{g:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = SimSpec(args.n_train, args.n_test, args.n_noise, args.seed)
    train, test, truth = simulate(spec)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    names = feature_names(spec.n_noise)
    for name, ds in (("train", train), ("test", test)):
        write_csv(out / f"{name}.csv", names + ["y"], [*ds.features.T, ds.response])
    x = test.features[:, 0]
    write_csv(
        out / "truth.csv",
        ["x"] + [f"q_{_fmt_p(p)}" for p in args.quantiles],
        [x] + [truth_quantile(p, x) for p in args.quantiles],
    )
    return EXIT_OK


def _param_index(model, spec: str) -> int:
    names = list(model.family.param_names)
    if spec in names:
        return names.index(spec)
    try:
        k = int(spec)
    except ValueError:
        raise ConfigError(f"unknown parameter {spec!r}; choose from {', '.join(names)}") from None
    if not 0 <= k < len(names):
        raise ConfigError(f"parameter index {k} out of range for {model.family.name}")
    return k


def cmd_explain(args) -> int:
    model = load_model(args.model)
    if isinstance(model, ExpectileModel):
        raise ConfigError("explain needs a distributional model")
    k = _param_index(model, args.param)
    pname = model.family.param_names[k]
    data = _load_features(model, args.data, args.response)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    if args.method in ("gain", "both"):
        reports.append(importance_gain(model, k))
    if args.method in ("permutation", "both"):
        if data.response is None:
            raise ConfigError("permutation importance needs --response")
        reports.append(importance_permutation(model, data, k, args.n_repeats, args.seed))
    for rep in reports:
        stem = out / f"importance_{pname}_{rep.method}"
        names = list(rep.scores)
        write_csv(stem.with_suffix(".csv"), ["feature", "score"], [names, [rep.scores[n] for n in names]])
        doc = {"param_index": rep.param_index, "param": pname, "method": rep.method, "scores": rep.scores}
        stem.with_suffix(".json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    for feature in args.pdp:
        pd = partial_dependence(model, data, k, feature, args.grid_size, args.moment)
        header = ["grid_value", f"mean_{pname}"]
        cols = [pd.grid, pd.values]
        if pd.moment:
            header.append(f"mean_{pd.moment}")
            cols.append(pd.moment_values)
        write_csv(out / f"pdp_{pname}_{feature}.csv", header, cols)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "select-family": cmd_select_family,
    "simulate": cmd_simulate,
    "explain": cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"distboost: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DistBoostError, OSError) as exc:
        print(f"distboost: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
