"""Command-line front end.

Subcommands:

- ``gen-data``  write a synthetic labeled dataset CSV
- ``run``       run the full experiment, write ledger.json / ledger.csv
- ``simulate``  sweep the coordination protocol over scheduler seeds
- ``worker``    run one real coordination worker against a shared directory
- ``report``    render a ledger into report.md plus per-strategy CSV series

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
3 simulation finished flagged (timeout/fault/hazard observed), 4 this
worker gave up waiting on its peers.

Options may come from a config file of flat ``key = value`` lines
(``#`` comments allowed); explicit command-line flags win over the file.
The ``TRITRAIN_OUT`` environment variable supplies the default output
directory when neither the flag nor the file names one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from .coord.protocol import (
    CoordinationTimeout,
    ProtocolError,
    WorkerData,
    WorkerSpec,
    builtin_coord_fit,
    coord_fit_from_fit_predict,
    make_specs,
)
from .coord.runner import run_worker
from .coord.sim import (
    KILL_BEFORE_PREDICTIONS_UPLOAD,
    KILL_BEFORE_SELECTED_UPLOAD,
    FaultPlan,
    converged,
    simulate,
)
from .coord.stores import DirectoryBlobstore, DirectoryDatastore, StoreError
from .dataset import (
    DatasetError,
    SplitMode,
    generate_blobs,
    holdout_split,
    labeled_from_pool,
    load_csv,
    pool_from_labeled,
    save_csv,
)
from .experiment import (
    BlobSpec,
    ConfigError,
    CsvSpec,
    ExperimentConfig,
    derive_seed,
    ledger_from_json,
    run_experiment,
    write_ledger,
)
from .learner import LearnerError, TrainConfig
from .report import write_report
from .strategy import StrategyError, StrategyKind

OUT_ENV = "TRITRAIN_OUT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_FLAGGED = 3
EXIT_COORD_TIMEOUT = 4


# ---------------------------------------------------------------------------
# Config file + option overlay


CONFIG_KEYS = {
    "train_csv", "eval_csv", "label_column",
    "n", "classes", "dim", "separation", "sigma", "n_eval",
    "train_fraction", "stratified", "split_mode", "strategies",
    "iterations", "epochs", "learning_rate", "l2", "batch_size",
    "seed", "learner_cmd", "external_timeout", "carry_forward", "out",
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` lines; later duplicates are rejected."""

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _convert(key: str, raw: str, conv: Callable):
    try:
        return conv(raw)
    except (ValueError, StrategyError, DatasetError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_split_mode(raw: str) -> SplitMode:
    low = raw.strip().lower()
    if low in ("thirds", "disjoint_thirds", "disjoint-thirds"):
        return SplitMode.DISJOINT_THIRDS
    if low == "bootstrap":
        return SplitMode.BOOTSTRAP
    raise ValueError(f"unknown split mode {raw!r} (use thirds or bootstrap)")


def _parse_strategies(raw: str) -> tuple[StrategyKind, ...]:
    parts = [p for p in (s.strip() for s in raw.split(",")) if p]
    if not parts:
        raise ValueError("empty strategy list")
    return tuple(StrategyKind.parse(p) for p in parts)


class Overlay:
    """CLI flag beats config-file value beats default."""

    def __init__(self, args: argparse.Namespace, filecfg: dict[str, str]):
        self.args = args
        self.filecfg = filecfg

    def get(self, key: str, conv: Callable, default):
        cli = getattr(self.args, key, None)
        if cli is not None:
            return cli
        if key in self.filecfg:
            return _convert(key, self.filecfg[key], conv)
        return default


def build_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    filecfg = parse_config_file(args.config) if args.config else {}
    ov = Overlay(args, filecfg)

    train_csv = ov.get("train_csv", str, None)
    eval_csv = ov.get("eval_csv", str, None)
    if (train_csv is None) != (eval_csv is None):
        raise ConfigError("train_csv and eval_csv must be given together")
    if train_csv is not None:
        source: BlobSpec | CsvSpec = CsvSpec(
            train_path=train_csv,
            eval_path=eval_csv,
            label_column=ov.get("label_column", str, "label"),
        )
    else:
        source = BlobSpec(
            n=ov.get("n", int, 600),
            k=ov.get("classes", int, 3),
            dim=ov.get("dim", int, 2),
            separation=ov.get("separation", float, 6.0),
            sigma=ov.get("sigma", float, 1.0),
            n_eval=ov.get("n_eval", int, 300),
        )

    learner_cmd = ov.get("learner_cmd", str, None)
    cfg = ExperimentConfig(
        source=source,
        train_fraction=ov.get("train_fraction", float, 0.7),
        stratified=ov.get("stratified", _parse_bool, False),
        split_mode=ov.get("split_mode", _parse_split_mode, SplitMode.DISJOINT_THIRDS),
        strategies=ov.get(
            "strategies",
            _parse_strategies,
            (
                StrategyKind.ANY_TWO_GROUND_TRUTH,
                StrategyKind.ALL_THREE_GROUND_TRUTH,
                StrategyKind.ALL_THREE_PREDICTED,
            ),
        ),
        iterations=ov.get("iterations", int, 3),
        train_cfg=TrainConfig(
            epochs=ov.get("epochs", int, 50),
            learning_rate=ov.get("learning_rate", float, 0.1),
            l2=ov.get("l2", float, 0.0),
            batch_size=ov.get("batch_size", int, 32),
        ),
        learner_command=learner_cmd,
        external_timeout=ov.get("external_timeout", float, 3600.0),
        carry_forward=ov.get("carry_forward", _parse_bool, True),
        seed=ov.get("seed", int, 0),
    )
    cfg.validate()
    return cfg


def resolve_out(args: argparse.Namespace, filecfg: dict[str, str] | None = None) -> Path:
    explicit = getattr(args, "out", None)
    if explicit:
        return Path(explicit)
    if filecfg and filecfg.get("out"):
        return Path(filecfg["out"])
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(".")


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args: argparse.Namespace) -> int:
    try:
        ds = generate_blobs(
            n=args.n, k=args.classes, dim=args.dim,
            separation=args.separation, sigma=args.sigma, seed=args.seed,
        )
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else resolve_out(args) / "dataset.csv"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_csv(ds, out)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(ds)} examples ({len(ds.alphabet)} classes) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def cmd_run(args: argparse.Namespace) -> int:
    filecfg = parse_config_file(args.config) if args.config else {}
    cfg = build_experiment_config(args)
    out_dir = resolve_out(args, filecfg)
    try:
        ledger = run_experiment(cfg)
    except (DatasetError, LearnerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        json_path, csv_path = write_ledger(ledger, out_dir)
    except OSError as exc:
        print(f"error: cannot write ledger: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"oracle   accuracy={ledger.oracle.accuracy:.4f} train={ledger.oracle.train_size}")
    print(f"baseline accuracy={ledger.baseline.accuracy:.4f} train={ledger.baseline.train_size}")
    for name, records in ledger.strategy_records.items():
        final = records[-1]
        rand = ledger.random_records[name]
        print(
            f"{name}: final accuracy={final.accuracy:.4f} train={final.train_size} "
            f"(random control {rand.accuracy:.4f})"
        )
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _parse_seed_spec(raw: str) -> list[int]:
    """'0:100' half-open range, or comma-separated values, or one integer."""

    raw = raw.strip()
    if ":" in raw:
        lo_s, _, hi_s = raw.partition(":")
        lo, hi = int(lo_s), int(hi_s)
        if hi <= lo:
            raise ValueError(f"empty seed range {raw!r}")
        return list(range(lo, hi))
    return [int(p) for p in raw.split(",") if p.strip()]


def _parse_fault(raw: str, aggregator: int) -> FaultPlan:
    """kill-aggregator[:iteration[:point]], point in {predictions,selected}."""

    parts = raw.split(":")
    if parts[0] != "kill-aggregator" or len(parts) > 3:
        raise ValueError(f"unknown fault spec {raw!r}")
    iteration = int(parts[1]) if len(parts) > 1 and parts[1] else 1
    point = KILL_BEFORE_SELECTED_UPLOAD
    if len(parts) > 2:
        point = {
            "predictions": KILL_BEFORE_PREDICTIONS_UPLOAD,
            "selected": KILL_BEFORE_SELECTED_UPLOAD,
        }.get(parts[2])
        if point is None:
            raise ValueError(f"unknown fault point {parts[2]!r}")
    return FaultPlan(worker=aggregator, iteration=iteration, point=point)


def _coord_data(args: argparse.Namespace) -> WorkerData:
    full = generate_blobs(
        n=args.n, k=args.classes, dim=args.dim,
        separation=args.separation, sigma=args.sigma,
        seed=derive_seed(args.seed, 0),
    )
    train, pool = holdout_split(
        full, args.train_fraction, stratified=False, seed=derive_seed(args.seed, 1)
    )
    return WorkerData(train=train, pool=pool)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        seeds = _parse_seed_spec(args.scheduler_seeds)
        strategy = StrategyKind.parse(args.strategy)
        split_mode = _parse_split_mode(args.split_mode)
        fault = _parse_fault(args.fault, args.aggregator) if args.fault else None
        specs = make_specs(
            strategy=strategy,
            iterations=args.iterations,
            split_mode=split_mode,
            poll_interval=args.poll_interval,
            timeout=args.timeout,
            seed=args.seed,
            aggregator=args.aggregator,
        )
        data = _coord_data(args)
    except (ValueError, DatasetError, StrategyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    coord_fit = builtin_coord_fit(TrainConfig(epochs=args.epochs))
    summary: dict[str, object] = {
        "seeds": {},
        "unsafe_status_check": args.unsafe_status_check,
        "fault": args.fault,
        "iterations": args.iterations,
        "strategy": strategy.value,
    }
    any_flagged = False
    try:
        for seed in seeds:
            result = simulate(
                specs, data, coord_fit, seed,
                fault_plan=fault,
                unsafe_status_check=args.unsafe_status_check,
            )
            conv = converged(result)
            flags = sorted(result.flags)
            flagged = bool(flags) or (fault is None and not conv)
            any_flagged = any_flagged or flagged
            summary["seeds"][str(seed)] = {  # type: ignore[index]
                "flags": flags,
                "converged": conv,
                "aggregations": result.aggregation_count(),
                "failures": dict(sorted(result.failures.items())),
            }
            status = "FLAGGED " + ",".join(flags) if flagged else "ok"
            print(
                f"seed {seed}: {status} converged={conv} "
                f"aggregations={result.aggregation_count()}"
            )
    except LearnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out_dir = resolve_out(args)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "sim_summary.json"
        path.write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"wrote {path}")
    except OSError as exc:
        print(f"error: cannot write summary: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_FLAGGED if any_flagged else EXIT_OK


# ---------------------------------------------------------------------------
# worker


def cmd_worker(args: argparse.Namespace) -> int:
    shared = Path(args.dir)
    if not shared.is_dir():
        print(f"error: shared directory {shared} does not exist", file=sys.stderr)
        return EXIT_RUNTIME

    claims = shared / "claims"
    claims.mkdir(exist_ok=True)
    claim_path = claims / f"w{args.index}.claim"
    try:
        fd = os.open(claim_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        print(
            f"error: worker index {args.index} already claimed in {shared}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    with os.fdopen(fd, "w") as fh:
        fh.write(f"{os.getpid()}\n")

    try:
        train = load_csv(shared / "train.csv")
        pool_ds = load_csv(shared / "pool.csv", alphabet=train.alphabet)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    data = WorkerData(train=train, pool=pool_from_labeled(pool_ds))

    try:
        strategy = StrategyKind.parse(args.strategy)
        split_mode = _parse_split_mode(args.split_mode)
        spec = WorkerSpec(
            index=args.index,
            is_aggregator=(args.index == args.aggregator),
            strategy=strategy,
            iterations=args.iterations,
            split_mode=split_mode,
            poll_interval=args.poll_interval,
            timeout=args.timeout,
            seed=args.seed,
        )
    except (ValueError, StrategyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    coord_fit = builtin_coord_fit(TrainConfig(epochs=args.epochs))
    datastore = DirectoryDatastore(shared)
    blobstore = DirectoryBlobstore(shared)
    try:
        result, events = run_worker(
            spec, data, coord_fit, datastore, blobstore,
            unsafe_status_check=args.unsafe_status_check,
        )
    except CoordinationTimeout as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COORD_TIMEOUT
    except (ProtocolError, StoreError, LearnerError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    final_dir = shared / "final" / f"w{args.index}"
    try:
        final_dir.mkdir(parents=True, exist_ok=True)
        save_csv(result.train, final_dir / "final_train.csv")
        save_csv(labeled_from_pool(result.pool), final_dir / "final_pool.csv")
        payload = {
            "index": args.index,
            "aggregator": args.aggregator,
            "train_accuracies": [repr(a) for a in result.train_accuracies],
            "selected_counts": list(result.selected_counts),
            "final_train_size": len(result.train),
            "final_pool_size": len(result.pool.examples),
            "events": len(events),
        }
        (final_dir / "result.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except (OSError, DatasetError) as exc:
        print(f"error: cannot write final state: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(
        f"worker {args.index} done: train={len(result.train)} "
        f"pool={len(result.pool.examples)} selections={list(result.selected_counts)}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args: argparse.Namespace) -> int:
    ledger_path = Path(args.ledger) if args.ledger else resolve_out(args) / "ledger.json"
    try:
        text = ledger_path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read ledger {ledger_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ledger = ledger_from_json(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else ledger_path.parent
    try:
        written = write_report(ledger, out_dir)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly


def _add_blob_opts(p: argparse.ArgumentParser, *, n_default: int | None) -> None:
    p.add_argument("--n", type=int, default=n_default, help="number of samples")
    p.add_argument("--classes", type=int, default=None, help="number of classes")
    p.add_argument("--dim", type=int, default=None, help="feature dimensionality")
    p.add_argument("--separation", type=float, default=None, help="minimum center distance")
    p.add_argument("--sigma", type=float, default=None, help="within-class noise scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tritrain",
        description="Tri-training active-learning experiments and their "
        "three-worker coordination protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic labeled dataset CSV")
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV path (default <outdir>/dataset.csv)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run the experiment and write the ledger")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--train-csv", dest="train_csv")
    p.add_argument("--eval-csv", dest="eval_csv")
    p.add_argument("--label-column", dest="label_column")
    _add_blob_opts(p, n_default=None)
    p.add_argument("--n-eval", dest="n_eval", type=int, default=None)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument(
        "--stratified", dest="stratified",
        action=argparse.BooleanOptionalAction, default=None,
    )
    p.add_argument("--split-mode", dest="split_mode", type=_parse_split_mode, default=None)
    p.add_argument(
        "--strategies", type=_parse_strategies, default=None,
        help="comma list: any2_ground_truth,all3_ground_truth,all3_predicted (or 1,2,3)",
    )
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--learner-cmd", dest="learner_cmd",
        help="external learner command (shell-quoted); omit for the builtin model",
    )
    p.add_argument("--external-timeout", dest="external_timeout", type=float, default=None)
    p.add_argument(
        "--carry-forward", dest="carry_forward",
        action=argparse.BooleanOptionalAction, default=None,
    )
    p.add_argument("--out", help="output directory for ledger files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="deterministically simulate the 3-worker protocol")
    p.add_argument("--scheduler-seeds", dest="scheduler_seeds", default="0:10",
                   help="'A:B' half-open range or comma list")
    p.add_argument("--seed", type=int, default=0, help="data/model seed")
    p.add_argument("--n", type=int, default=120)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.7)
    p.add_argument("--strategy", default="any2_ground_truth")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--split-mode", dest="split_mode", default="thirds")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--poll-interval", dest="poll_interval", type=float, default=1.0)
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--aggregator", type=int, default=0, choices=(0, 1, 2))
    p.add_argument(
        "--unsafe-status-check", dest="unsafe_status_check", action="store_true",
        help="drop the iteration guard on the aggregator's peer poll",
    )
    p.add_argument(
        "--fault", default=None,
        help="kill-aggregator[:iteration[:predictions|selected]]",
    )
    p.add_argument("--out", help="directory for sim_summary.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("worker", help="run one coordination worker (real clock)")
    p.add_argument("--dir", required=True, help="shared run directory")
    p.add_argument("--index", type=int, required=True, choices=(0, 1, 2))
    p.add_argument("--aggregator", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--strategy", default="any2_ground_truth")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--split-mode", dest="split_mode", default="thirds")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poll-interval", dest="poll_interval", type=float, default=0.05)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument(
        "--unsafe-status-check", dest="unsafe_status_check", action="store_true",
    )
    p.set_defaults(func=cmd_worker)

    p = sub.add_parser("report", help="render a ledger as markdown + CSV series")
    p.add_argument("--ledger", help="path to ledger.json (default <outdir>/ledger.json)")
    p.add_argument("--out", help="output directory (default: alongside the ledger)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except StrategyError as exc:  # raised by type= converters
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProtocolError, StoreError, LearnerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
