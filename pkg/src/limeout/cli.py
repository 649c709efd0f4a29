"""Command-line driver: ``limeout audit | explain | compare``.

An audit is described by one JSON config file (see ``configs/``); the flags
``--seed``, ``--out``, ``--k`` and ``--sensitive`` override the matching keys.
Relative paths in a config resolve against the config file's directory.

Exit status: 0 when the command ran (an unfair verdict is still a successful
audit), 2 for invalid configs or arguments, 1 for other failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .core import ConfigurationError, LimeOutConfig, audit_dataset, prepare_training
from .data import Dataset, compute_stats, load_csv, train_test_split
from .global_explain import GlobalConfig
from .lime import Discretizer, LimeConfig, explain_instance
from .models import Recipe, drop_features, save_model
from .report import CompareError, compare_reports, format_comparison, format_report, load_report, to_json
from .seeding import derive_seed

# key -> (accepted types, check, description)
_NUM = (int, float)
CONFIG_KEYS = {
    "dataset": (str, None, "path to the CSV file"),
    "schema": ((str, type(None)), None, "path to the schema hint"),
    "model": (dict, None, "model recipe"),
    "sensitive": (list, lambda v: len(v) > 0 and all(isinstance(s, str) for s in v),
                  "non-empty list of feature names"),
    "k": (int, lambda v: v >= 1, "integer >= 1"),
    "sigma": ((*_NUM, type(None)), lambda v: v is None or v > 0, "positive number or null"),
    "n_samples": (int, lambda v: v >= 2, "integer >= 2"),
    "ridge_lambda": (_NUM, lambda v: v >= 0, "number >= 0"),
    "candidates": (int, lambda v: v >= 1, "integer >= 1"),
    "budget": (int, lambda v: v >= 1, "integer >= 1"),
    "pick": (str, lambda v: v in ("submodular", "random"), '"submodular" or "random"'),
    "aggregate": (str, lambda v: v in ("signed", "abs"), '"signed" or "abs"'),
    "correlation_threshold": (_NUM, lambda v: 0 <= v <= 1, "number in [0, 1]"),
    "seed": (int, lambda v: v >= 0, "integer >= 0"),
    "runs": (int, lambda v: v == 0 or v >= 2, "0 or an integer >= 2"),
    "test_fraction": (_NUM, lambda v: 0 < v < 1, "number in (0, 1)"),
    "validation_fraction": (_NUM, lambda v: 0 <= v < 1, "number in [0, 1)"),
    "smote_k": (int, lambda v: v >= 1, "integer >= 1"),
    "p_quantiles": (int, lambda v: v >= 2, "integer >= 2"),
    "force_repair": (bool, None, "true or false"),
    "n_jobs": (int, lambda v: v >= 1, "integer >= 1"),
    "out": (str, None, "output directory"),
}
REQUIRED = ("dataset", "model", "sensitive")
MODEL_KEYS = {"kind", "params", "tune"}


class ConfigError(ValueError):
    pass


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a JSON object")
    for key in cfg:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown config key")
    for key in REQUIRED:
        if key not in cfg:
            raise ConfigError(f"{key}: required key missing")
    for key, value in cfg.items():
        types, check, desc = CONFIG_KEYS[key]
        ok = isinstance(value, types) and not (isinstance(value, bool) and bool not in
                                                 (types if isinstance(types, tuple) else (types,)))
        if not ok or (check is not None and not check(value)):
            raise ConfigError(f"{key}: expected {desc}, got {value!r}")
    model = cfg["model"]
    for key in model:
        if key not in MODEL_KEYS:
            raise ConfigError(f"model.{key}: unknown model key")
    if not isinstance(model.get("tune", True), bool):
        raise ConfigError(f"model.tune: expected true or false, got {model['tune']!r}")
    try:
        Recipe(model.get("kind", "logistic"), dict(model.get("params", {})), model.get("tune", True))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"model: {e}") from None
    return cfg


def read_config(path, overrides: dict | None = None) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON ({e})") from None
    if isinstance(cfg, dict):
        cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
        for key in ("dataset", "schema", "out"):
            if isinstance(cfg.get(key), str) and not Path(cfg[key]).is_absolute():
                cfg[key] = str(path.parent / cfg[key])
    return validate_config(cfg)


def load_data(cfg: dict) -> Dataset:
    for key in ("dataset", "schema"):
        if cfg.get(key) is not None and not Path(cfg[key]).is_file():
            raise ConfigError(f"{key}: file not found: {cfg[key]}")
    data = load_csv(cfg["dataset"], cfg.get("schema"))
    names = set(data.feature_names)
    unknown = [s for s in cfg["sensitive"] if s not in names]
    if unknown:
        raise ConfigError(f"sensitive: unknown feature(s) {', '.join(map(repr, unknown))}")
    return data


def build(cfg: dict) -> tuple[Recipe, LimeOutConfig]:
    model = cfg["model"]
    recipe = Recipe(model.get("kind", "logistic"), dict(model.get("params", {})), model.get("tune", True))
    lime = LimeConfig(n_samples=cfg.get("n_samples", 5000), sigma=cfg.get("sigma"),
                      ridge_lambda=float(cfg.get("ridge_lambda", 1.0)))
    explain = GlobalConfig(candidates=cfg.get("candidates", 1000), budget=cfg.get("budget", 50),
                           pick=cfg.get("pick", "submodular"),
                           aggregate=cfg.get("aggregate", "signed"), lime=lime)
    keys = ("k", "correlation_threshold", "seed", "runs", "test_fraction",
            "validation_fraction", "smote_k", "p_quantiles", "force_repair", "n_jobs")
    lo = LimeOutConfig(sensitive=tuple(cfg["sensitive"]), explain=explain,
                       **{k: cfg[k] for k in keys if k in cfg})
    return recipe, lo


def cmd_audit(cfg: dict) -> int:
    data = load_data(cfg)
    recipe, lo = build(cfg)
    report = audit_dataset(recipe, data, lo)
    out = Path(cfg.get("out", "limeout-out"))
    out.mkdir(parents=True, exist_ok=True)
    d = report.to_dict()
    (out / "report.json").write_text(to_json(d))
    (out / "report.txt").write_text(format_report(d))
    save_model(report.final_model, out / "model.json")
    print(format_report(d), end="")
    print(f"\nreport written to {out}")
    return 0


def cmd_explain(cfg: dict, index: int, drop: list[str]) -> int:
    data = load_data(cfg)
    bad = [f for f in drop if f not in data.feature_names]
    if bad:
        raise ConfigError(f"drop: unknown feature(s) {', '.join(map(repr, bad))}")
    recipe, lo = build(cfg)
    train, test = train_test_split(data, lo.test_fraction, derive_seed(lo.seed, "split"))
    if not 0 <= index < len(test):
        raise IndexError(f"index: {index} is outside the test set (0..{len(test) - 1})")
    balanced, val = prepare_training(train, lo, lo.seed)
    if drop:
        model = drop_features(recipe, balanced, drop, derive_seed(lo.seed, "model"), val)
    else:
        model = recipe.fit(balanced, derive_seed(lo.seed, "model"), val)
    disc = Discretizer(compute_stats(train, lo.p_quantiles))
    lime = lo.explain.lime
    lime = LimeConfig(lime.n_samples, lime.sigma, lime.ridge_lambda,
                      derive_seed(derive_seed(lo.seed, "lime"), index))
    exp = explain_instance(model, test.X[index], disc, lime)
    out = Path(cfg.get("out", "limeout-out"))
    out.mkdir(parents=True, exist_ok=True)
    header = f"test row {index}, label {test.schema.target_values[int(test.y[index])]}\n"
    text = header + exp.to_text()
    (out / f"explanation_{index}.txt").write_text(text)
    d = {"index": index, "dropped": list(drop), **exp.to_dict()}
    (out / f"explanation_{index}.json").write_text(to_json(d))
    print(text, end="")
    return 0


def cmd_compare(a: str, b: str, stage_a: str, stage_b: str, k: int | None, out: str | None) -> int:
    c = compare_reports(load_report(a), load_report(b), stage_a, stage_b, k)
    text = format_comparison(c)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "comparison.txt").write_text(text)
        (Path(out) / "comparison.json").write_text(to_json(c.to_dict()))
    print(text, end="")
    return 0


def _comma_list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="limeout", description="Process-fairness audit and repair.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON audit config")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--k", type=int, help="top-k cutoff")
        sp.add_argument("--sensitive", type=_comma_list, help="comma-separated sensitive features")

    common(sub.add_parser("audit", help="audit a model and repair it when unfair"))
    ex = sub.add_parser("explain", help="explain one test-set prediction")
    common(ex)
    ex.add_argument("--index", type=int, default=0, help="test-set row")
    ex.add_argument("--drop", type=_comma_list, default=[], help="features to drop from the model")
    cp = sub.add_parser("compare", help="diff the rankings of two reports")
    cp.add_argument("report_a")
    cp.add_argument("report_b")
    cp.add_argument("--stage-a", choices=("before", "after"), default="before")
    cp.add_argument("--stage-b", choices=("before", "after"), default="before")
    cp.add_argument("--k", type=int)
    cp.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.report_a, args.report_b, args.stage_a, args.stage_b,
                               args.k, args.out)
        overrides = {"seed": args.seed, "out": args.out, "k": args.k, "sensitive": args.sensitive}
        cfg = read_config(args.config, {})
        # flag values are relative to the working directory, not the config
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        validate_config(cfg)
        if args.command == "audit":
            return cmd_audit(cfg)
        return cmd_explain(cfg, args.index, args.drop)
    except (ConfigError, ConfigurationError, IndexError) as e:
        print(f"limeout: error: {e}", file=sys.stderr)
        return 2
    except CompareError as e:
        print(f"limeout: comparison error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"limeout: failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
