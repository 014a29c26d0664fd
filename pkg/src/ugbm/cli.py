"""Batch command line: ``ugbm {train,predict,importance,select-features,demo-bias,demo-example1}``.

Exit codes: 0 success, 1 runtime error, 2 usage error. Every command writes a
``*.manifest.json`` next to its primary output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import booster, demos, importance, selection
from .booster import GBMConfig
from .data import Dataset, Kind, load_csv
from .errors import SchemaMismatch, UGBMError
from .loss import LossKind, eval_loss, transform
from .metrics import auc, rmse
from .splitter import Mode

logger = logging.getLogger("ugbm")


class UsageError(Exception):
    pass


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


def _ratios(s: str) -> tuple[float, float, float]:
    parts = s.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios look like a:b:c")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {s!r}") from None


def _csv_list(s: str) -> list[str]:
    return [p for p in s.split(",") if p]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(primary: Path, args, config: GBMConfig | None, inputs, outputs, started: float) -> None:
    doc = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": config.to_dict() if config else None,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.time() - started, 3),
    }
    primary.with_name(primary.name + ".manifest.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _add_config_flags(p: argparse.ArgumentParser, mode_default: str = "unbiased") -> None:
    d = GBMConfig()
    p.add_argument("--loss", choices=[k.value for k in LossKind], default=d.loss.value)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=mode_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-estimators", type=int, default=d.n_estimators)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--min-data-in-leaf", type=int, default=d.min_data_in_leaf)
    p.add_argument("--min-split-gain", type=float, default=d.min_split_gain)
    p.add_argument("--max-leaves", type=int, default=d.max_leaves)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--ratios", type=_ratios, default=d.partition_ratios, help="sub-train:val1:val2, default 1:1:1")
    p.add_argument("--merge-validation", type=_bool, default=d.merge_validation)


def _config(args) -> GBMConfig:
    try:
        return GBMConfig(
            mode=args.mode,
            n_estimators=args.n_estimators,
            learning_rate=args.learning_rate,
            min_data_in_leaf=args.min_data_in_leaf,
            min_split_gain=args.min_split_gain,
            max_leaves=args.max_leaves,
            max_depth=args.max_depth,
            partition_ratios=args.ratios,
            merge_validation=args.merge_validation,
            loss=args.loss,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_for_model(model: booster.BoostedModel, path, target: str | None) -> Dataset:
    """Read a CSV and arrange its columns in the model's feature order."""
    cats = [f.name for f in model.features if f.kind == Kind.CATEGORICAL]
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    missing = [f.name for f in model.features if f.name not in header]
    if missing:
        raise SchemaMismatch(f"{path} lacks model feature column(s): {', '.join(missing)}")
    ds = load_csv(path, target if target in header else None, cats)
    index = {name: j for j, name in enumerate(ds.feature_names)}
    return ds.select_features(index[f.name] for f in model.features)


def cmd_train(args) -> int:
    started = time.time()
    config = _config(args)
    train = load_csv(args.train, args.target, args.categorical)
    model = booster.fit(train, config)
    out = Path(args.out)
    booster.save(model, out)
    raw = booster.predict(model, train)
    if config.loss == LossKind.LOGISTIC:
        metric = f"train_logloss={eval_loss(config.loss, raw, train.target):.6f}"
        if 0 < train.target.sum() < train.n_rows:
            metric += f" train_auc={auc(train.target, raw):.6f}"
    else:
        metric = f"train_rmse={rmse(train.target, raw):.6f}"
    print(f"trees={len(model.trees)} {metric}")
    _write_manifest(out, args, config, [args.train], [out], started)
    return 0


def cmd_predict(args) -> int:
    started = time.time()
    model = booster.load(args.model)
    data = _load_for_model(model, args.data, args.target)
    raw = booster.predict(model, data)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        logistic = model.loss == LossKind.LOGISTIC
        w.writerow(["row_index", "score", "probability"] if logistic else ["row_index", "score"])
        prob = transform(model.loss, raw)
        for i, s in enumerate(raw):
            w.writerow([i, repr(float(s)), repr(float(prob[i]))] if logistic else [i, repr(float(s))])
    _write_manifest(out, args, model.config, [args.model, args.data], [out], started)
    return 0


def cmd_importance(args) -> int:
    started = time.time()
    model = booster.load(args.model)
    if args.method == "gain":
        report = importance.gain_importance(model)
    elif args.method == "split_score":
        report = importance.split_score_importance(model)
    else:
        oob = _load_for_model(model, args.oob, args.target)
        if args.method == "unbiased":
            report = importance.unbiased_gain(model, oob, repeats=args.repeats, seed=args.seed)
        else:
            metric = args.metric or ("auc" if model.loss == LossKind.LOGISTIC else "rmse")
            report = importance.permutation_importance(model, oob, metric=metric, repeats=args.repeats, seed=args.seed)
    prefix = Path(args.out_prefix)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    json_path.write_text(report.to_json(), encoding="utf-8")
    for name, v in sorted(zip(report.feature_names, report.values), key=lambda t: -t[1]):
        print(f"{name}\t{v:.6g}")
    if report.diagnostics:
        print(f"skipped splits: {report.diagnostics}")
    _write_manifest(csv_path, args, model.config, [args.model, args.oob], [csv_path, json_path], started)
    return 0


def cmd_select_features(args) -> int:
    started = time.time()
    config = _config(args)
    train = load_csv(args.train, args.target, args.categorical)
    test = load_csv(args.test, args.target, args.categorical)
    if train.feature_names != test.feature_names:
        raise SchemaMismatch("train and test must have the same columns")
    rows = selection.select_features(train, test, config, args.methods, args.top_percents, args.oob_fraction)
    metric = "auc" if config.loss == LossKind.LOGISTIC else "rmse"
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "k", "n_features", metric, "features"])
        for r in rows:
            w.writerow([r["method"], r["k"], r["n_features"], repr(r["score"]), ";".join(r["features"])])
            print(f"{r['method']}\tk={r['k']}\t{metric}={r['score']:.6f}")
    _write_manifest(out, args, config, [args.train, args.test], [out], started)
    return 0


def cmd_demo_bias(args) -> int:
    started = time.time()
    gains = demos.bias_trials(args.n, args.trials, args.seed)
    theory = 1.0 / (2 * args.n)
    mean = float(gains.mean())
    se = float(gains.std(ddof=1) / math.sqrt(len(gains))) if len(gains) > 1 else float("nan")
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "gain", "theory"])
        for t, g in enumerate(gains):
            w.writerow([t, repr(float(g)), repr(theory)])
    summary = out.with_name(out.stem + "_summary.csv")
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "trials", "mean", "se", "theory"])
        w.writerow([args.n, args.trials, repr(mean), repr(se), repr(theory)])
    print(f"mean={mean:.6g} se={se:.3g} theory={theory:.6g} z={(mean - theory) / se:.2f}")
    _write_manifest(out, args, None, [], [out, summary], started)
    return 0


def cmd_demo_example1(args) -> int:
    started = time.time()
    config = dataclasses.replace(
        demos.EXAMPLE1_CONFIG,
        n_estimators=args.n_estimators,
        learning_rate=args.learning_rate,
        max_leaves=args.max_leaves,
        min_data_in_leaf=args.min_data_in_leaf,
    )
    gains, unbiased = demos.example1_trials(args.repetitions, args.n, args.seed, config)
    prefix = Path(args.out_prefix)
    outputs = []
    for method, values in (("gain", gains), ("unbiased", unbiased)):
        path = prefix.with_name(f"{prefix.name}_{method}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["repetition", "feature", "method", "value"])
            for r in range(values.shape[0]):
                for j, name in enumerate(("X1", "X2", "X3")):
                    w.writerow([r, name, method, repr(float(values[r, j]))])
        outputs.append(path)
    se = unbiased.std(axis=0, ddof=1) / math.sqrt(len(unbiased)) if len(unbiased) > 1 else np.full(3, np.nan)
    print("gain median:    " + "  ".join(f"{n}={v:.4g}" for n, v in zip(("X1", "X2", "X3"), np.median(gains, axis=0))))
    print("unbiased mean:  " + "  ".join(f"{n}={v:.4g}" for n, v in zip(("X1", "X2", "X3"), unbiased.mean(axis=0))))
    print("unbiased se:    " + "  ".join(f"{n}={v:.3g}" for n, v in zip(("X1", "X2", "X3"), se)))
    _write_manifest(outputs[0], args, config, [], outputs, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugbm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model from a CSV")
    p.add_argument("--train", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--categorical", type=_csv_list, default=[])
    p.add_argument("--out", default="model.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", default=None, help="column to ignore if present")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("importance", help="feature importance of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=["gain", "unbiased", "permutation", "split_score"], required=True)
    p.add_argument("--oob", help="held-out CSV, required for unbiased and permutation")
    p.add_argument("--target", default="y")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", choices=["auc", "rmse"], default=None)
    p.add_argument("--out-prefix", default="importance")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("select-features", help="top-k%% feature selection benchmark")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--categorical", type=_csv_list, default=[])
    p.add_argument("--methods", type=_csv_list, default=list(selection.METHODS))
    p.add_argument("--top-percents", type=lambda s: [float(v) for v in _csv_list(s)], default=[10.0, 20.0, 30.0])
    p.add_argument("--oob-fraction", type=float, default=0.3)
    p.add_argument("--out", default="selection.csv")
    _add_config_flags(p, mode_default="classic")
    p.set_defaults(func=cmd_select_features)

    p = sub.add_parser("demo-bias", help="Monte Carlo gain of an uninformative median split")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--trials", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="demo_bias.csv")
    p.set_defaults(func=cmd_demo_bias)

    d = demos.EXAMPLE1_CONFIG
    p = sub.add_parser(
        "demo-example1",
        help="gain vs unbiased gain on the X1/X2/X3 synthetic task",
        description="Defaults: 1000 repetitions of n=1000; classic model with 50 trees, lr 0.05, 31 leaves.",
    )
    p.add_argument("--repetitions", type=int, default=1000)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-estimators", type=int, default=d.n_estimators)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--max-leaves", type=int, default=d.max_leaves)
    p.add_argument("--min-data-in-leaf", type=int, default=d.min_data_in_leaf)
    p.add_argument("--out-prefix", default="example1")
    p.set_defaults(func=cmd_demo_example1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "importance" and args.method in ("unbiased", "permutation") and not args.oob:
        parser.error(f"--oob is required for --method {args.method}")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (UGBMError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
