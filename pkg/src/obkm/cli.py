"""Command-line interface: ``obkm {generate,train,sweep,infer}``.

Every option can also come from a JSON object passed with ``--config``;
keys are the option names with dashes replaced by underscores, and flags
given on the command line override the file.  Exit status is 0 on success,
1 for invalid input (nothing is written) and 2 when a run fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from decimal import Decimal
from pathlib import Path

import numpy as np

from obkm import datagen, evaluation
from obkm.inference import METHODS, InferenceParams, all_batch
from obkm.io import atomic_write_json, atomic_write_text
from obkm.model import BALANCE_RULES, DISTANCE_MODES, Hyperparams, from_snapshot, to_snapshot

log = logging.getLogger("obkm")


class ConfigError(Exception):
    """Invalid command-line or config-file input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_values(spec, axis: str) -> list:
    """Parse ``"a:b:step"`` (inclusive) or ``"v1,v2,..."`` into a list of numbers."""
    if isinstance(spec, (list, tuple)):
        items = [str(v) for v in spec]
    elif ":" in str(spec):
        parts = str(spec).split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {spec!r}")
        start, stop, inc = (Decimal(p) for p in parts)
        if inc <= 0:
            raise ConfigError("range step must be positive")
        items, v = [], start
        while v <= stop:
            items.append(str(v))
            v += inc
    else:
        items = [s for s in str(spec).split(",") if s.strip()]
    try:
        if axis == "k":
            values = [int(Decimal(s)) for s in items]
        else:
            values = [float(s) for s in items]
    except ArithmeticError:
        raise ConfigError(f"could not parse sweep values {spec!r}") from None
    except ValueError:
        raise ConfigError(f"could not parse sweep values {spec!r}") from None
    if not values:
        raise ConfigError("sweep values are empty")
    return values


def _parse_seeds(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


# -- argument groups ---------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for data generation and splitting")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep runs")
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("-v", "--verbose", action="store_true")


def _hp_args(p):
    g = p.add_argument_group("clustering")
    g.add_argument("--k", type=int, default=300)
    g.add_argument("--alpha", type=float, default=0.6)
    g.add_argument("--beta", type=float, default=0.07)
    g.add_argument("--distance", choices=DISTANCE_MODES, default="euclidean")
    g.add_argument("--balance-rule", choices=BALANCE_RULES, default="zscore")
    g.add_argument("--window", type=int, default=1000, help="points per loss/error window")


def _inference_args(p):
    g = p.add_argument_group("inference")
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--neighbors", type=int, default=5)
    g.add_argument("--merge-alpha", type=float, default=0.5)
    g.add_argument("--cs-beta", type=float, default=1.0)
    g.add_argument("--no-normalize-cs-exp", dest="normalize_cs_exp", action="store_false")


def _data_args(p, default_preset):
    g = p.add_argument_group("data")
    g.add_argument("--preset", default=default_preset, choices=datagen.preset_names())
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--n-train", type=int, default=10_000)
    g.add_argument("--n-test", type=int, default=1_000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obkm", description="Online balanced k-means: datasets, training, sweeps, inference.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset CSV")
    _common(g)
    g.add_argument("--preset", default="uniform", choices=datagen.preset_names())
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--n", type=int, default=11_000)
    g.add_argument("--out", help="output path (default <out-dir>/<preset>.csv)")

    t = sub.add_parser("train", help="train a model and write its window records")
    _common(t)
    _data_args(t, "normal")
    t.add_argument("--data", help="dataset CSV; generated from --preset when omitted")
    t.add_argument("--train-fraction", type=float, default=10 / 11,
                   help="train share when splitting --data")
    _hp_args(t)
    _inference_args(t)

    s = sub.add_parser("sweep", help="sweep one hyperparameter over several seeds")
    _common(s)
    _data_args(s, "normal")
    s.add_argument("--axis", choices=evaluation.AXES, default="k")
    s.add_argument("--values", default="100:1000:100")
    s.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
    _hp_args(s)
    _inference_args(s)

    i = sub.add_parser("infer", help="predict last coordinates for a query CSV")
    _common(i)
    i.add_argument("--model", required=False, help="model snapshot JSON from `train`")
    i.add_argument("--queries", required=False, help="CSV with d-1 columns and a header row")
    i.add_argument("--overall-mean", type=float, help="override the snapshot's training mean")
    i.add_argument("--out", help="output path (default <out-dir>/predictions.csv)")
    _inference_args(i)
    return parser


def _subparser(parser, name) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if isinstance(action, argparse._SubParsersAction):  # noqa: SLF001
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions} - {"help", "config"}  # noqa: SLF001
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _hyperparams(args) -> Hyperparams:
    try:
        return Hyperparams(k=args.k, alpha=args.alpha, beta=args.beta,
                           distance_mode=args.distance, balance_rule=args.balance_rule)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _inference_params(args, k: int | None = None) -> InferenceParams:
    try:
        p = InferenceParams(temperature=args.temperature, neighbor_count=args.neighbors,
                            merge_alpha=args.merge_alpha, cs_beta=args.cs_beta,
                            normalize_cs_exp=args.normalize_cs_exp)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if k is not None and p.neighbor_count > k:
        raise ConfigError(f"neighbors={p.neighbor_count} exceeds k={k}")
    return p


def _check_window(args):
    if args.window < 1:
        raise ConfigError("window must be positive")


def _check_preset_size(args):
    # config-file values bypass argparse's choices check
    if args.preset not in datagen.preset_names():
        raise ConfigError(f"unknown preset {args.preset!r}")
    if args.dim < 2:
        raise ConfigError("dim must be >= 2")
    if args.n_train < 1 or args.n_test < 1:
        raise ConfigError("n-train and n-test must be positive")


# -- commands ----------------------------------------------------------------------

def cmd_generate(args) -> list[Path]:
    try:
        spec = datagen.preset(args.preset, dim=args.dim, n_points=args.n, seed=args.seed)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out) if args.out else Path(args.out_dir) / f"{args.preset}.csv"
    return [datagen.write_csv(out, datagen.generate(spec))]


def _training_data(args):
    if args.data:
        try:
            data = datagen.read_csv(args.data)
            return datagen.split(data, args.train_fraction, seed=args.seed), Path(args.data).stem
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    _check_preset_size(args)
    train, test = evaluation.make_dataset(args.preset, args.seed, args.dim, args.n_train, args.n_test)
    return (train, test), args.preset


def cmd_train(args) -> list[Path]:
    hp = _hyperparams(args)
    p = _inference_params(args, hp.k)
    _check_window(args)
    (train, test), name = _training_data(args)
    if len(train) < hp.k + args.window:
        raise ConfigError(f"k + window = {hp.k + args.window} exceeds the {len(train)} training rows")
    record, model, overall_mean = evaluation.run_training(
        train, test, hp, p, args.window, data_preset=name, seed=args.seed, return_model=True)
    out = Path(args.out_dir)
    snap = to_snapshot(model, hp, overall_mean=float(overall_mean))
    return [
        atomic_write_json(out / "model.json", snap),
        atomic_write_text(out / "windows.csv", evaluation.record_to_csv(record)),
    ]


def cmd_sweep(args) -> list[Path]:
    base = _hyperparams(args)
    values = parse_values(args.values, args.axis)
    seeds = _parse_seeds(args.seeds) if args.seeds is not None else [args.seed]
    _check_window(args)
    _check_preset_size(args)
    try:
        spec = evaluation.SweepSpec(args.axis, values, base, _inference_params(args),
                                    args.preset, seeds, args.dim, args.n_train, args.n_test,
                                    args.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    min_k = min(spec.hp_for(v).k for v in spec.values)
    _inference_params(args, min_k)
    max_k = max(spec.hp_for(v).k for v in spec.values)
    if args.n_train < max_k + args.window:
        raise ConfigError(f"n-train={args.n_train} is smaller than k + window = {max_k + args.window}")

    failure = None
    try:
        records = evaluation.sweep(spec, jobs=args.jobs)
    except evaluation.SweepError as exc:
        failure, records = exc, exc.records
    out = Path(args.out_dir)
    written = [atomic_write_text(out / "runs" / f"{r.run_id}.csv", evaluation.record_to_csv(r))
               for r in records]
    if records:
        summary = evaluation.summarize(records, args.axis)
        written.append(atomic_write_text(out / "summary.csv", evaluation.summary_to_csv(summary)))
        best = summary.argmin_error
        log.info("lowest error at %s=%s (%s)", args.axis, best.value, best.best_method)
    if failure is not None:
        raise failure
    return written


def cmd_infer(args) -> list[Path]:
    if not args.model or not args.queries:
        raise ConfigError("infer needs --model and --queries")
    try:
        with open(args.model, encoding="utf-8") as fh:
            snap = json.load(fh)
        model, _ = from_snapshot(snap)
        queries = datagen.read_csv(args.queries)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if queries.shape[1] != model.dim - 1:
        raise ConfigError(f"queries have {queries.shape[1]} columns, model expects {model.dim - 1}")
    p = _inference_params(args, model.k)
    overall_mean = args.overall_mean if args.overall_mean is not None else snap.get("overall_mean")
    if overall_mean is None:
        raise ConfigError("snapshot has no overall_mean; pass --overall-mean")
    est = all_batch(model, queries, p, float(overall_mean))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query_id", "method", "estimate"])
    for q in range(len(queries)):
        for m in METHODS:
            w.writerow([q, m, repr(float(est[m][q]))])
    out = Path(args.out) if args.out else Path(args.out_dir) / "predictions.csv"
    return [atomic_write_text(out, buf.getvalue())]


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "infer": cmd_infer,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        for path in COMMANDS[args.command](args):
            print(path)
    except ConfigError as exc:
        print(f"error: validation: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any failure on one line
        print(f"error: runtime: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
