"""
Command-line front-end.

  synth    write a synthetic feature CSV
  train    train one head on a feature CSV
  eval     score a checkpoint (or a baseline) on a feature CSV
  loso     leave-one-subject-out cross-validation
  dedup    drop redundant same-label frames from a feature CSV
  compare  LOSO for each method row (loss / center-norm / sampler variants)

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import pandas as pd

from ._common import (
    ConfigError,
    DataError,
    DivergenceError,
    DomainError,
    NumericDomainError,
    PainRegError,
    ShapeError,
    UsageError,
    derive_seed,
)
from .baselines import all_zeros_predictor, linear_least_squares_oracle
from .crossval import run_loso, write_loso_outputs
from .data import (
    PROFILES,
    deduplicate,
    generate_synthetic,
    infer_feature_dim,
    load_dataset,
    load_quantization,
    save_dataset,
)
from .losses import CenterNorm, RegressionKind
from .metrics import Aggregation, evaluate, label_predictions, write_predictions_csv
from .model import Activation, CenterInit, TrainConfig, load_checkpoint, predict, to_checkpoint, train
from .sampler import SamplerKind
from .utils import ensure_dir, load_json, none_if_nan, save_frame, save_json

logger = logging.getLogger("painreg.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

# (row name, loss overrides, sampler)
METHOD_VARIANTS = [
    ("smooth_l1", {"kind": "smooth_l1", "lambda": 0.0}, "uniform"),
    ("l1 + l1 center", {"kind": "l1", "norm": "l1"}, "uniform"),
    ("smooth_l1 + l1 center", {"kind": "smooth_l1", "norm": "l1"}, "uniform"),
    ("smooth_l1 + l2 center", {"kind": "smooth_l1", "norm": "l2"}, "uniform"),
    ("l1 + l1 center + sampling", {"kind": "l1", "norm": "l1"}, "balanced"),
    ("smooth_l1 + l1 center + sampling", {"kind": "smooth_l1", "norm": "l1"}, "balanced"),
]

TABLE_COLUMNS = [("MAE", "mae"), ("MSE", "mse"), ("PCC", "pcc"), ("wMAE", "wmae"), ("wMSE", "wmse")]

# flag dest -> TrainConfig key
_TRAIN_FLAGS = {
    "lr": "learning_rate",
    "iterations": "iterations",
    "batch_size": "batch_size",
    "momentum": "momentum",
    "seed": "seed",
    "sampler": "sampler",
    "hidden": "hidden_dim",
    "dropout": "dropout_rate",
    "activation": "activation",
    "center_init": "center_init",
    "log_every": "log_every",
}
# flag dest -> loss config key
_LOSS_FLAGS = {"t": "t", "center_weight": "lambda", "center_norm": "norm", "loss": "kind"}


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_train_flags(p):
    p.add_argument("--config", help="training config JSON; flags override its values")
    p.add_argument("--lr", type=float, help="learning rate (default 0.0001)")
    p.add_argument("--iterations", type=int, help="SGD iterations (default 5000)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default 36)")
    p.add_argument("--momentum", type=float, help="classical momentum (default 0)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--t", type=float, help="smooth l1 turning point (default 1)")
    p.add_argument("--lambda", dest="center_weight", type=float, help="center loss weight (default 0.01)")
    p.add_argument("--center-norm", dest="center_norm", choices=[n.value for n in CenterNorm])
    p.add_argument("--loss", choices=[k.value for k in RegressionKind])
    p.add_argument("--sampler", choices=[k.value for k in SamplerKind])
    p.add_argument("--hidden", type=int, help="hidden layer width (default 50)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.5)")
    p.add_argument("--activation", choices=[a.value for a in Activation])
    p.add_argument("--center-init", dest="center_init", choices=[c.value for c in CenterInit])
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--dedup", action=argparse.BooleanOptionalAction, default=None,
                   help="de-duplicate training frames (default on)")
    p.add_argument("--dedup-threshold", dest="dedup_threshold", type=int)
    p.add_argument("--quantize", help="labels are raw 0..15: 'default' or a JSON map path")


def build_parser():
    p = CliParser(prog="painreg", description="Pain intensity regression head: train, evaluate, cross-validate")
    p.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic feature CSV")
    s.add_argument("--out", required=True)
    s.add_argument("--subjects", type=int, default=5)
    s.add_argument("--frames", type=int, default=200, help="frames per subject")
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--noise", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--profile", choices=PROFILES, default="balanced")
    s.add_argument("--sequences", type=int, default=1, help="sequences per subject")
    s.add_argument("--spacing", type=float, default=4.0, help="anchor spacing along the readout")
    s.set_defaults(handler=cmd_synth)

    t = sub.add_parser("train", help="train one head on a feature CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory")
    _add_train_flags(t)
    t.set_defaults(handler=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or a baseline")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", choices=["zeros", "oracle"])
    e.add_argument("--train-data", dest="train_data", help="training CSV for the oracle baseline")
    e.add_argument("--aggregation", choices=[a.value for a in Aggregation], default="per_sequence")
    e.add_argument("--quantize")
    e.set_defaults(handler=cmd_eval)

    for name, handler, text in (
        ("loso", cmd_loso, "leave-one-subject-out cross-validation"),
        ("compare", cmd_compare, "LOSO for every method row"),
    ):
        c = sub.add_parser(name, help=text)
        c.add_argument("--data", required=True)
        c.add_argument("--out", required=True, help="output directory")
        c.add_argument("--workers", type=int, default=1)
        c.add_argument("--repeats", type=int, default=1)
        _add_train_flags(c)
        c.set_defaults(handler=handler)

    d = sub.add_parser("dedup", help="drop redundant same-label frames")
    d.add_argument("--data", required=True)
    d.add_argument("--out", required=True, help="output CSV")
    d.add_argument("--threshold", type=int, default=5)
    d.set_defaults(handler=cmd_dedup)
    return p


def resolve_train_settings(args):
    """Defaults <- --config file <- explicit flags. Returns (TrainConfig, preprocessing dict)."""
    raw = load_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    raw = dict(raw)
    dedup = raw.pop("dedup", True)
    threshold = raw.pop("dedup_threshold", 5)
    loss = dict(raw.get("loss") or {})
    for dest, key in _TRAIN_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            raw[key] = value
    for dest, key in _LOSS_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            loss[key] = value
    raw["loss"] = loss
    if args.dedup is not None:
        dedup = args.dedup
    if args.dedup_threshold is not None:
        threshold = args.dedup_threshold
    config = TrainConfig.from_dict(raw)
    preprocessing = {"dedup": bool(dedup), "dedup_threshold": int(threshold), "quantize": args.quantize}
    return config, preprocessing


def _load(path, quantize=None, feature_dim=None):
    dim = infer_feature_dim(path)
    if feature_dim is not None and dim != feature_dim:
        raise ShapeError(f"{path} has D={dim}, expected D={feature_dim}")
    return load_dataset(path, dim, quantization=load_quantization(quantize))


def _print_json(data):
    print(json.dumps(data, indent=2, ensure_ascii=False))


def _cell(value):
    value = none_if_nan(value)
    return "N/A" if value is None else f"{value:.6f}"


def format_table(rows):
    """rows: [(name, metrics dict)] -> fixed-width MAE/MSE/PCC/wMAE/wMSE table."""
    width = max(len("method"), *(len(name) for name, _ in rows))
    lines = ["method".ljust(width) + "".join(h.rjust(11) for h, _ in TABLE_COLUMNS)]
    for name, metrics in rows:
        lines.append(name.ljust(width) + "".join(_cell(metrics.get(k)).rjust(11) for _, k in TABLE_COLUMNS))
    return "\n".join(lines)


def cmd_synth(args):
    dataset = generate_synthetic(
        args.subjects, args.frames, args.dim, args.noise, args.seed,
        profile=args.profile, sequences_per_subject=args.sequences, anchor_spacing=args.spacing,
    )
    save_dataset(dataset, args.out)
    counts = dataset.class_counts()
    _print_json({
        "path": args.out,
        "rows": len(dataset),
        "feature_dim": dataset.feature_dim,
        "profile": args.profile,
        "seed": args.seed,
        "class_histogram": counts,
        "zero_fraction": counts[0] / len(dataset),
    })
    return EXIT_OK


def cmd_train(args):
    config, prep = resolve_train_settings(args)
    dataset = _load(args.data, prep["quantize"], config.feature_dim)
    if prep["dedup"]:
        dataset = deduplicate(dataset, prep["dedup_threshold"])
    model = train(dataset, config)
    ensure_dir(args.out)
    checkpoint = to_checkpoint(model)
    checkpoint["preprocessing"] = prep
    save_json(checkpoint, os.path.join(args.out, "checkpoint.json"))
    log = pd.DataFrame([e.to_dict() for e in model.training_log],
                       columns=["iteration", "total", "regression", "center"])
    save_frame(log, os.path.join(args.out, "training_log.csv"))
    _print_json({
        "out": args.out,
        "frames": len(dataset),
        "iterations": config.iterations,
        "final_loss": model.training_log[-1].total if model.training_log else None,
    })
    return EXIT_OK


def cmd_eval(args):
    if args.checkpoint is None and args.baseline is None:
        raise ConfigError("eval needs --checkpoint or --baseline")
    if args.baseline == "oracle" and not args.train_data:
        raise ConfigError("--baseline oracle needs --train-data")
    model = None
    if args.baseline is None:
        model = load_checkpoint(args.checkpoint)
        dataset = _load(args.data, args.quantize, model.head.input_dim)
        predictions = predict(model, dataset)
    elif args.baseline == "zeros":
        dataset = _load(args.data, args.quantize)
        predictions = all_zeros_predictor(dataset)
    else:
        dataset = _load(args.data, args.quantize)
        train_set = _load(args.train_data, args.quantize, dataset.feature_dim)
        predictions = linear_least_squares_oracle(train_set, dataset)

    labeled = label_predictions(dataset.samples, predictions)
    report = evaluate(labeled, dataset.num_classes, args.aggregation)
    payload = report.to_dict()
    payload["config"] = {
        "baseline": args.baseline,
        "aggregation": args.aggregation,
        "quantize": args.quantize,
        "model": model.config.to_dict() if model else None,
    }
    save_json(payload, os.path.join(args.out, "metrics.json"))
    write_predictions_csv(labeled, os.path.join(args.out, "predictions.csv"))
    _print_json({k: payload[k] for k in ("mae", "mse", "pcc", "pcc_excluded_count", "wmae", "wmse")})
    return EXIT_OK


def _repeat_seed(base, r):
    return base if r == 0 else derive_seed(base, f"repeat{r}")


def _check_repeats(args):
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")


def _mean_defined(values):
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def _summary(report):
    return {k: getattr(report, k) for _, k in TABLE_COLUMNS} if report else {}


def _raise_for_failures(failed):
    """failed holds (message, diverged) pairs; divergence takes precedence for the exit code."""
    if not failed:
        return
    message = "; ".join(m for m, _ in failed)
    if any(d for _, d in failed):
        raise DivergenceError(None, message)
    raise DataError(message)


def cmd_loso(args):
    _check_repeats(args)
    config, prep = resolve_train_settings(args)
    dataset = _load(args.data, prep["quantize"], config.feature_dim)
    failed = []
    for r in range(args.repeats):
        run_config = replace(config, seed=_repeat_seed(config.seed, r))
        result = run_loso(dataset, run_config, prep["dedup"], prep["dedup_threshold"], args.workers)
        result.config["preprocessing"] = prep
        out = args.out if args.repeats == 1 else os.path.join(args.out, f"repeat_{r}")
        write_loso_outputs(result, out)
        if args.repeats > 1:
            print(f"repeat {r} (seed {run_config.seed})")
        print(format_table([("method", _summary(result.aggregate)), ("all_zeros", _summary(result.baseline))]))
        failed.extend((f.error, f.diverged) for f in result.failures)
    _raise_for_failures(failed)
    return EXIT_OK


def cmd_compare(args):
    _check_repeats(args)
    config, prep = resolve_train_settings(args)
    dataset = _load(args.data, prep["quantize"], config.feature_dim)
    rows, payload, failed = [], {"methods": {}, "config": {"train": config.to_dict(), "preprocessing": prep}}, []
    baseline = None
    for name, loss_overrides, sampler in METHOD_VARIANTS:
        base = config.to_dict()
        base["loss"] = {**base["loss"], **loss_overrides}
        base["sampler"] = sampler
        scores = []
        for r in range(args.repeats):
            base["seed"] = _repeat_seed(config.seed, r)
            result = run_loso(dataset, TrainConfig.from_dict(base), prep["dedup"], prep["dedup_threshold"], args.workers)
            failed.extend((f"{name}: {f.error}", f.diverged) for f in result.failures)
            scores.append(_summary(result.aggregate))
            baseline = baseline or _summary(result.baseline)
        merged = {k: _mean_defined(s.get(k) for s in scores) for _, k in TABLE_COLUMNS}
        payload["methods"][name] = {"metrics": merged, "loss": base["loss"], "sampler": sampler}
        rows.append((name, merged))
    rows.append(("all_zeros", baseline or {}))
    payload["baselines"] = {"all_zeros": baseline}
    save_json(payload, os.path.join(args.out, "compare.json"))
    print(format_table(rows))
    _raise_for_failures(failed)
    return EXIT_OK


def cmd_dedup(args):
    dataset = _load(args.data)
    kept = deduplicate(dataset, args.threshold)
    save_dataset(kept, args.out)
    _print_json({"input_frames": len(dataset), "kept_frames": len(kept), "removed_frames": len(dataset) - len(kept)})
    return EXIT_OK


def _configure_logging(debug):
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO, format="%(levelname)s: %(message)s")
    # keep the package logger tree on the CLI level even if logging was configured earlier
    logging.getLogger("painreg").setLevel(logging.DEBUG if debug else logging.INFO)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _configure_logging(args.debug)

    try:
        return args.handler(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        logger.error("numeric divergence: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, DomainError, ShapeError, NumericDomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e.strerror or e}: {e.filename}", file=sys.stderr)
        return EXIT_DATA
    except PainRegError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as e:
        print(f"error: malformed JSON: {e}", file=sys.stderr)
        return EXIT_DATA
