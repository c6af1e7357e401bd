"""Command-line entry point.

Commands: synth, split, train, eval, gradcheck. Every run writes exactly one
run manifest (command, config snapshot, seed, dataset hash, build id, output
paths) so identical manifests imply identical outputs.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical-check
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    SplitPlan,
    dataset_hash,
    load_dataset,
    make_split,
    synth_dataset,
    write_dataset,
)
from .errors import ConfigError, DataError, RobokaError
from .gradcheck import run_gradcheck
from .model import ARCH_TAGS, OBJECTIVES
from .train import TrainConfig, cross_validate, evaluate, train_model, write_training_log

_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, f"{path}:{lineno}")
    return values


def _coerce(key: str, raw: str, where: str):
    kind = _CONFIG_TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {raw!r}") from exc


def _build_train_config(args) -> TrainConfig:
    values = _parse_config_file(args.config) if args.config else {}
    for key in ("arch_tag", "objective", "seed", "epochs", "batch_size", "lr", "tau", "threads"):
        flag = getattr(args, key, None)
        if flag is not None and key in _CONFIG_TYPES:
            values[key] = flag
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def _write_manifest(out_dir: Path, command: str, config: dict, seed, data_hash, outputs) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "dataset_hash": data_hash,
        "build": __version__,
        "outputs": outputs,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _load_split(path: str) -> SplitPlan:
    try:
        return SplitPlan.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read split plan {path}: {exc}") from exc


def _cmd_synth(args) -> int:
    if args.n < 1:
        raise ConfigError("n must be >= 1")
    records = synth_dataset(
        n_per_class=args.n,
        d_s=args.d_s,
        d_t=args.d_t,
        t_range=(args.t_min, args.t_max),
        coupling=args.coupling,
        noise=args.noise,
        seed=args.seed,
    )
    out = Path(args.out)
    write_dataset(records, out)
    digest = dataset_hash(out)
    _write_manifest(
        out,
        "synth",
        {
            "n": args.n,
            "d_s": args.d_s,
            "d_t": args.d_t,
            "t_min": args.t_min,
            "t_max": args.t_max,
            "coupling": args.coupling,
            "noise": args.noise,
        },
        args.seed,
        digest,
        {"dataset": str(out)},
    )
    print(json.dumps({"records": len(records), "dataset_hash": digest}))
    return 0


def _cmd_split(args) -> int:
    records = load_dataset(args.data)
    plan = make_split(records, args.protocol, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(plan.to_dict(), sort_keys=True, indent=2) + "\n")
    manifest_dir = out.parent
    _write_manifest(
        manifest_dir,
        "split",
        {"protocol": args.protocol, "data": str(args.data)},
        args.seed,
        dataset_hash(args.data),
        {"split": str(out)},
    )
    print(json.dumps({"train": len(plan.train_ids), "test": len(plan.test_ids)}))
    return 0


def _cmd_train(args) -> int:
    cfg = _build_train_config(args)
    records = load_dataset(args.data)
    plan = _load_split(args.split)
    by_id = {r.id: r for r in records}
    try:
        train_records = [by_id[i] for i in plan.train_ids]
        test_records = [by_id[i] for i in plan.test_ids]
    except KeyError as exc:
        raise DataError(f"split references unknown record id {exc}") from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cv = cross_validate(cfg, train_records, plan.fold_assignments, threads=args.threads)
    model, log = train_model(cfg, train_records)
    report = evaluate(model, test_records, plan.protocol)

    ckpt = out / "checkpoint.rbka"
    save_checkpoint(model, ckpt)
    write_training_log(log, out / "train_log.csv")
    (out / "cv_metrics.json").write_text(json.dumps(cv.to_dict(), sort_keys=True, indent=2) + "\n")
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    _write_manifest(
        out,
        "train",
        dataclasses.asdict(cfg),
        cfg.seed,
        dataset_hash(args.data),
        {
            "checkpoint": str(ckpt),
            "train_log": str(out / "train_log.csv"),
            "cv_metrics": str(out / "cv_metrics.json"),
            "metrics": str(out / "metrics.json"),
        },
    )
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    records = load_dataset(args.data)
    if records and (records[0].audio.shape[1], records[0].text.shape[1]) != (model.d_s, model.d_t):
        raise DataError(
            f"dataset embedding dims ({records[0].audio.shape[1]}, {records[0].text.shape[1]}) "
            f"do not match the checkpoint's ({model.d_s}, {model.d_t})"
        )
    plan = _load_split(args.split)
    by_id = {r.id: r for r in records}
    try:
        test_records = [by_id[i] for i in plan.test_ids]
    except KeyError as exc:
        raise DataError(f"split references unknown record id {exc}") from exc
    report = evaluate(model, test_records, plan.protocol)
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        _write_manifest(
            out.parent,
            "eval",
            {"model": str(args.model), "split": str(args.split)},
            None,
            dataset_hash(args.data),
            {"metrics": str(out)},
        )
    return 0


def _cmd_gradcheck(args) -> int:
    report = run_gradcheck(args.arch, seed=args.seed, instances=args.instances)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0 if report.passed else 3


def _make_parser() -> _Parser:
    parser = _Parser(prog="roboka", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n", type=int, required=True, help="records per class")
    p_synth.add_argument("--coupling", type=float, default=0.7)
    p_synth.add_argument("--noise", type=float, default=0.5)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--d-s", dest="d_s", type=int, default=12)
    p_synth.add_argument("--d-t", dest="d_t", type=int, default=12)
    p_synth.add_argument("--t-min", dest="t_min", type=int, default=8)
    p_synth.add_argument("--t-max", dest="t_max", type=int, default=20)
    p_synth.set_defaults(func=_cmd_synth)

    p_split = sub.add_parser("split", help="emit a split plan as JSON")
    p_split.add_argument("--data", required=True)
    p_split.add_argument("--protocol", required=True, choices=["T1", "T2", "T3", "T4"])
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", required=True)
    p_split.set_defaults(func=_cmd_split)

    p_train = sub.add_parser("train", help="cross-validate, train, evaluate")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--split", required=True)
    p_train.add_argument("--arch", dest="arch_tag", choices=list(ARCH_TAGS))
    p_train.add_argument("--objective", choices=list(OBJECTIVES))
    p_train.add_argument("--config", help="flat key=value config file")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--tau", type=float)
    p_train.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a split's test side")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", required=True)
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=_cmd_eval)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_gc.add_argument("--arch", required=True, choices=list(ARCH_TAGS))
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--instances", type=int, default=20)
    p_gc.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RobokaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
