"""Command-line experiment runner.

Every subcommand writes plot-ready ``results.csv`` (long format, header
``method,lambda,seed,fold,metric,value``) and a ``manifest.json`` recording
the resolved configuration, package versions and the numerical defaults in
effect. Options can come from a JSON file (``--config``), which may also be
the manifest of an earlier run; flags given on the command line override it.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .afs import AFSConfig, ridge_refit, run_afs
from .coupled_loop import CoupledConfig, LogisticConfig
from .dataset import ColumnSpec, DataError, Dataset, load_csv, write_csv
from .datagen import PRESETS, generate
from .dictionary import build_dictionary, normalize_atoms
from .eval_cv import (
    BRIER_CLIP, SweepResult, cv_select_lambda, get_trainer, lambda_sweep, metric,
)
from .linear_coupled import RidgeConfig

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class ConfigError(Exception):
    pass


DEFAULTS = {
    "seed": 0,
    "seeds": None,
    "out": "out",
    "lambda_grid": "-4,4,25",
    "method": "coupled",
    "folds": 5,
    "groups": None,
    "preset": "controlled",
    "n": None,
    "m": None,
    "n_test": None,
    "generator": {},
    "metric": None,
    "references": False,
    "which": "signal",
    "values": None,
    "data": None,
    "test_data": None,
    "x_cols": None,
    "w_cols": None,
    "label_col": None,
    "kind": "regression",
    "stratify": False,
    "dictionary": "rbf",
    "dictionary_count": 256,
    "K": 50,
    "lam": 1.0,
    "options": {},
}

# written to manifests but recomputed on load
DERIVED_KEYS = ("methods", "grid")

SWEEP_KNOBS = {
    "signal": ("alpha", [0.0, 0.5, 1.0, 2.0, 4.0]),
    "wdim": ("d_noise", [0, 10, 20, 40]),
    "unlabeled": ("m", [100, 1000, 10000]),
}


def design_defaults() -> dict:
    """Numerical conventions recorded in every manifest."""
    return {
        "ridge_default": {"alpha_f": RidgeConfig().alpha_f, "alpha_g": RidgeConfig().alpha_g},
        "coupled_loop": vars(CoupledConfig()),
        "logistic": vars(LogisticConfig()),
        "afs": vars(AFSConfig()),
        "brier_clip": BRIER_CLIP,
        "zero_one_threshold": ">= 0.5",
        "cv_tie_rule": "smallest lambda among fold means within 1e-12 relative of the minimum",
        "cv_training_rows": "labeled minus held-out fold, plus all unlabeled rows",
        "sd_convention": "population",
        "median_heuristic": "1 / median pairwise squared distance on up to 600 points",
        "rbf_centers": "all labeled rows plus up to 500 unlabeled rows",
        "jitter_when_both_ridges_zero": "1e-12 * trace / dim",
        "missing_privileged_features": "rejected",
    }


def versions() -> dict:
    import scipy
    import sklearn
    return {"cotrain": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def parse_grid(spec) -> list[float]:
    """``"START,END,COUNT"`` of base-10 exponents, or an explicit list of values."""
    if isinstance(spec, list):
        return sorted(float(v) for v in spec)
    try:
        start, end, count = spec.split(",")
        start, end, count = float(start), float(end), int(count)
    except ValueError:
        raise ConfigError(f"lambda grid must be START,END,COUNT, got {spec!r}") from None
    if count < 1:
        raise ConfigError("lambda grid needs at least one point")
    return [float(v) for v in np.logspace(start, end, count)]


def _split_names(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, list):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if isinstance(from_file, dict) and isinstance(from_file.get("config"), dict):
            # a manifest from an earlier run: reuse its resolved configuration
            from_file = {k: v for k, v in from_file["config"].items() if k not in DERIVED_KEYS}
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(from_file) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(from_file)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    cfg["methods"] = _split_names(cfg["method"])
    if not cfg["methods"]:
        raise ConfigError("no method given")
    if cfg["seeds"] is None:
        cfg["seeds"] = [int(cfg["seed"])]
    elif not isinstance(cfg["seeds"], list):
        cfg["seeds"] = [int(s) for s in _split_names(cfg["seeds"])]
    cfg["grid"] = parse_grid(cfg["lambda_grid"])
    return cfg


def _write_manifest(out: Path, cfg: dict, extra: dict | None = None):
    manifest = {"config": {k: v for k, v in cfg.items()}, "versions": versions(), "defaults": design_defaults()}
    manifest.update(extra or {})
    with (out / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _sizes(cfg) -> dict:
    return {k: int(cfg[k]) for k in ("n", "m", "n_test") if cfg[k] is not None}


def _generate(cfg, seed, generator_overrides=None, size_overrides=None):
    try:
        return generate(cfg["preset"], seed, {**_sizes(cfg), **(size_overrides or {})},
                        {**cfg["generator"], **(generator_overrides or {})})
    except TypeError as exc:
        raise ConfigError(f"bad generator settings: {exc}") from None


def _metrics(cfg, binary: bool, have_mu: bool) -> list[str]:
    if cfg["metric"]:
        return _split_names(cfg["metric"])
    if binary:
        return ["brier", "zero_one"]
    return ["mse", "est_err_vs_mu"] if have_mu else ["mse"]


def _load(cfg, path_key: str = "data") -> Dataset:
    path = cfg[path_key]
    if not path:
        raise ConfigError(f"--{path_key.replace('_', '-')} is required")
    x_cols, w_cols = _split_names(cfg["x_cols"]), _split_names(cfg["w_cols"])
    if not x_cols or not cfg["label_col"]:
        raise ConfigError("--x-cols and --label-col are required for CSV input")
    spec = ColumnSpec(x_cols, w_cols, cfg["label_col"], cfg["kind"], cfg["groups"] if path_key == "data" else None)
    return load_csv(path, spec)


# --- subcommands -----------------------------------------------------------

def cmd_gen_data(cfg, out: Path):
    seed = cfg["seeds"][0]
    ds, truth = _generate(cfg, seed)
    write_csv(ds, out / "train.csv")
    write_csv(truth.test_dataset(), out / "test.csv")
    side = {"params": truth.params, "metadata": truth.metadata}
    with (out / "truth.json").open("w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    _write_manifest(out, cfg, {"columns": {"x": list(ds.x_names), "w": list(ds.w_names), "label": ds.y_name}})


def cmd_lambda_curve(cfg, out: Path):
    res = SweepResult()
    for seed in cfg["seeds"]:
        ds, truth = _generate(cfg, seed)
        kinds = _metrics(cfg, ds.kind == "binary", truth.mu is not None)
        mu = truth.mu_test if truth.mu is not None else None
        for method in cfg["methods"]:
            res.extend(lambda_sweep(ds, truth.test_dataset(), cfg["grid"], method, kinds, truth_test=mu,
                                    seed=seed, options=cfg["options"], references=cfg["references"]))
    res.to_csv(out / "results.csv")
    _write_manifest(out, cfg)


def cmd_synth_sweep(cfg, out: Path):
    if cfg["preset"] != "controlled":
        raise ConfigError("synth-sweep uses the controlled generator")
    knob, default_values = SWEEP_KNOBS[cfg["which"]]
    values = cfg["values"] if cfg["values"] is not None else default_values
    if isinstance(values, str):
        values = [float(v) for v in _split_names(values)]
    res = SweepResult()
    for value in values:
        tag = f"{knob}={value:g}"
        for seed in cfg["seeds"]:
            if knob == "m":
                ds, truth = _generate(cfg, seed, size_overrides={"m": int(value)})
            else:
                ds, truth = _generate(cfg, seed, generator_overrides={knob: type(default_values[0])(value)})
            for method in cfg["methods"]:
                if method in ("baseline", "two_stage"):
                    lam = 0.0 if method == "baseline" else math.inf
                else:
                    lam = cv_select_lambda(ds, cfg["grid"], method, cfg["folds"], seed,
                                           options=cfg["options"]).selected
                pred = get_trainer(method)(ds, lam, cfg["options"])(truth.x_test)
                res.add(method, lam, seed, tag, "est_err_vs_mu", metric("est_err_vs_mu", pred, truth.mu_test))
    res.to_csv(out / "results.csv")
    _write_manifest(out, cfg, {"knob": knob, "values": list(values)})


def cmd_afs_demo(cfg, out: Path):
    seed = cfg["seeds"][0]
    ds, truth = _generate(cfg, seed)
    params = {"seed": seed}
    if cfg["dictionary"] == "random_projection":
        params["count"] = int(cfg["dictionary_count"])
    elif cfg["dictionary"] == "rbf":
        params["max_unlabeled_centers"] = int(cfg["dictionary_count"])
    dict_f = normalize_atoms(build_dictionary(cfg["dictionary"], params, ds, "f"))
    dict_g = normalize_atoms(build_dictionary(cfg["dictionary"], params, ds, "g"))
    lam = float(cfg["lam"])
    model, trace = run_afs(ds, dict_f, dict_g, lam, int(cfg["K"]))
    # excess energy relative to the best residual reached, scaled by k / log(k + 1)
    final = trace.residual_norm[-1] ** 2
    with (out / "trace.csv").open("w", newline="") as fh:
        fields = ["iteration", "alpha", "beta", "residual_norm", "next_residual_norm", "objective",
                  "selected_f", "selected_g", "scan_flops", "excess_vs_final", "scaled_excess"]
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in trace.rows():
            k = row["iteration"]
            excess = row["residual_norm"] ** 2 - final
            row.update(excess_vs_final=excess, scaled_excess=excess * k / math.log(k + 1))
            w.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()})
    res = SweepResult()
    kinds = _metrics(cfg, ds.kind == "binary", truth.mu is not None)
    refit = ridge_refit(ds, model) if model.dict_f is not None else model
    for name, mdl in (("afs", model), ("afs_refit", refit)):
        pred = mdl.predict_f(truth.x_test)
        for kind in kinds:
            target = truth.mu_test if kind == "est_err_vs_mu" else truth.y_test
            res.add(name, lam, seed, "test", kind, metric(kind, pred, target))
    res.to_csv(out / "results.csv")
    (out / "model.json").write_text(model.to_json() + "\n")
    _write_manifest(out, cfg, {"stop_reason": trace.stop_reason, "iterations": trace.iterations,
                               "dropped_f": list(dict_f.dropped), "dropped_g": list(dict_g.dropped)})


def _cv_dataset(cfg):
    if cfg["data"]:
        return _load(cfg), cfg["seeds"][0]
    seed = cfg["seeds"][0]
    ds, _ = _generate(cfg, seed)
    return ds, seed


def cmd_cv_select(cfg, out: Path):
    ds, seed = _cv_dataset(cfg)
    groups = ds.groups if cfg["groups"] else None
    res = SweepResult()
    selected = {}
    for method in cfg["methods"]:
        rep = cv_select_lambda(ds, cfg["grid"], method, int(cfg["folds"]), seed, groups=groups,
                               stratify=bool(cfg["stratify"]), metric_kind=cfg["metric"], options=cfg["options"])
        res.extend(rep.to_result(seed))
        selected[method] = {"lambda": rep.selected, "tie": rep.tie, "metric": rep.metric}
    res.to_csv(out / "results.csv")
    _write_manifest(out, cfg, {"selected": selected})


def cmd_run_csv(cfg, out: Path):
    ds = _load(cfg)
    test = _load(cfg, "test_data") if cfg["test_data"] else None
    seed = cfg["seeds"][0]
    groups = ds.groups if cfg["groups"] else None
    res = SweepResult()
    selected = {}
    kinds = _metrics(cfg, ds.kind == "binary", False)
    for method in cfg["methods"]:
        rep = cv_select_lambda(ds, cfg["grid"], method, int(cfg["folds"]), seed, groups=groups,
                               stratify=bool(cfg["stratify"]), metric_kind=kinds[0], options=cfg["options"])
        res.extend(rep.to_result(seed))
        selected[method] = {"lambda": rep.selected, "tie": rep.tie}
        if test is not None:
            pred = get_trainer(method)(ds, rep.selected, cfg["options"])(test.x_labeled)
            for kind in kinds:
                res.add(method, rep.selected, seed, "test", kind, metric(kind, pred, test.y_labeled))
    res.to_csv(out / "results.csv")
    _write_manifest(out, cfg, {"selected": selected, "n": ds.n, "m": ds.m})


COMMANDS = {
    "gen-data": cmd_gen_data,
    "lambda-curve": cmd_lambda_curve,
    "synth-sweep": cmd_synth_sweep,
    "afs-demo": cmd_afs_demo,
    "cv-select": cmd_cv_select,
    "run-csv": cmd_run_csv,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--lambda-grid", dest="lambda_grid", help="START,END,COUNT in log10 units")
    common.add_argument("--method", help="method name or comma-separated list")
    common.add_argument("--folds", type=int)
    common.add_argument("--groups", help="group column for grouped cross-validation")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--n", type=int)
    common.add_argument("--m", type=int)
    common.add_argument("--n-test", dest="n_test", type=int)
    common.add_argument("--metric", help="metric name or comma-separated list")
    common.add_argument("--references", action="store_true", default=None,
                        help="also emit baseline (lambda=0) and Two-Stage (lambda=inf) rows")
    common.add_argument("--data", help="input CSV")
    common.add_argument("--test-data", dest="test_data", help="held-out CSV for run-csv")
    common.add_argument("--x-cols", dest="x_cols", help="deployment columns, comma-separated")
    common.add_argument("--w-cols", dest="w_cols", help="privileged columns, comma-separated")
    common.add_argument("--label-col", dest="label_col")
    common.add_argument("--kind", choices=("regression", "binary"))
    common.add_argument("--stratify", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="cotrain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset as CSV")
    sub.add_parser("lambda-curve", parents=[common], help="test metrics along a lambda grid")
    sweep = sub.add_parser("synth-sweep", parents=[common], help="controlled-generator sweeps")
    sweep.add_argument("--which", choices=sorted(SWEEP_KNOBS))
    sweep.add_argument("--values", help="comma-separated knob values")
    afs = sub.add_parser("afs-demo", parents=[common], help="alternating forward selection trace")
    afs.add_argument("--dictionary", choices=("raw", "random_projection", "rbf"))
    afs.add_argument("--dictionary-count", dest="dictionary_count", type=int)
    afs.add_argument("--K", type=int)
    afs.add_argument("--lam", type=float)
    sub.add_parser("cv-select", parents=[common], help="choose lambda by labeled-only cross-validation")
    sub.add_parser("run-csv", parents=[common], help="cross-validate and evaluate methods on CSV data")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
