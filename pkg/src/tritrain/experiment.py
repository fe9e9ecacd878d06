"""End-to-end experiment driver: oracle, baseline, strategy arms, random control.

One experiment run:
  1. fit the oracle on 100% of the labeled data
  2. hold out a fraction (default 70/30) into train + unlabeled pool
  3. fit the baseline on the train split
  4. per strategy arm, run active-learning iterations on an independent pool
     copy: split train three ways, fit three members, poll the pool, augment,
     refit a combined model, evaluate
  5. per arm, fit a random control whose train size matches that arm's final
     augmented size

Seeds are derived from the master seed through numpy SeedSequence spawn keys
so every fit, split, and draw is reproducible in isolation:

    derive_seed(master, 0)             data generation
    derive_seed(master, 1)             holdout split
    derive_seed(master, 2)             oracle fit
    derive_seed(master, 3)             baseline fit
    derive_seed(master, 4, a, i, j)    arm a, iteration i; j = 0 split,
                                       1..3 member fits, 4 combined fit
    derive_seed(master, 5, a, 0 | 1)   arm a random draw | random fit
"""

from __future__ import annotations

import csv
import io
import json
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import (
    Example,
    LabeledDataset,
    SplitMode,
    UnlabeledPool,
    apply_augmentation,
    generate_blobs,
    holdout_split,
    load_csv,
    save_csv,
    save_examples_csv,
    three_way_split,
)
from .learner import (
    PredictionSet,
    TrainConfig,
    accuracy_against,
    external_fit_predict,
    fit_softmax,
    predict,
)
from .strategy import Provenance, StrategyKind, select, random_select


class ConfigError(ValueError):
    """Raised for invalid experiment configuration."""


def derive_seed(master: int, *path: int) -> int:
    """Derive an independent child seed from the master seed and an int path."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(path))
    return int(seq.generate_state(1)[0])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlobSpec:
    """Generate train + eval data from Gaussian blobs (shared centers)."""

    n: int = 600
    k: int = 3
    dim: int = 2
    separation: float = 6.0
    sigma: float = 1.0
    n_eval: int = 300


@dataclass(frozen=True)
class CsvSpec:
    """Load train + eval data from CSV files (eval shares the train alphabet)."""

    train_path: str
    eval_path: str
    label_column: str = "label"


@dataclass(frozen=True)
class ExperimentConfig:
    source: BlobSpec | CsvSpec = field(default_factory=BlobSpec)
    train_fraction: float = 0.7
    stratified: bool = False
    split_mode: SplitMode = SplitMode.DISJOINT_THIRDS
    strategies: tuple[StrategyKind, ...] = (
        StrategyKind.ANY_TWO_GROUND_TRUTH,
        StrategyKind.ALL_THREE_GROUND_TRUTH,
        StrategyKind.ALL_THREE_PREDICTED,
    )
    iterations: int = 3
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    learner_command: str | tuple[str, ...] | None = None  # None = built-in softmax
    external_timeout: float = 3600.0
    carry_forward: bool = True  # iteration i+1 splits the augmented set
    seed: int = 0

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("duplicate strategies configured")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.external_timeout <= 0:
            raise ConfigError("external_timeout must be positive")


# ---------------------------------------------------------------------------
# Ledger records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    arm: str  # oracle | baseline | strategy | random
    strategy: str | None
    iteration: int  # 0 = oracle/baseline reference point
    train_size: int
    selected_count: int
    accuracy: float
    label_error_rate: float


@dataclass(frozen=True)
class RunLedger:
    oracle: IterationRecord
    baseline: IterationRecord
    strategy_records: dict[str, list[IterationRecord]]
    random_records: dict[str, IterationRecord]
    config_echo: dict
    decisions_echo: dict

    def all_records(self) -> list[IterationRecord]:
        out = [self.oracle, self.baseline]
        for name, records in self.strategy_records.items():
            out.extend(records)
            out.append(self.random_records[name])
        return out


# ---------------------------------------------------------------------------
# Learner boundary
# ---------------------------------------------------------------------------

# (train set, targets, tag, fit seed) -> predictions over the targets
FitPredict = Callable[[LabeledDataset, Sequence[Example], str, int], PredictionSet]


def builtin_fit_predict(train_cfg: TrainConfig) -> FitPredict:
    def run(train, targets, tag, seed):
        model = fit_softmax(train, replace(train_cfg, seed=seed))
        return predict(model, targets, tag=tag)

    return run


def external_fit_predict_boundary(cfg: ExperimentConfig) -> FitPredict:
    """Adapt the subprocess learner contract to the in-process boundary.

    Each call writes the train set and target features to a scratch
    directory and parses the prediction file the external command leaves
    behind. Only epochs and seed cross the boundary.
    """

    def run(train, targets, tag, seed):
        with tempfile.TemporaryDirectory(prefix="tritrain-arm-") as work:
            train_path = Path(work) / "train.csv"
            pool_path = Path(work) / "pool.csv"
            save_csv(train, train_path)
            save_examples_csv(targets, pool_path)
            return external_fit_predict(
                train_path,
                pool_path,
                replace(cfg.train_cfg, seed=seed),
                cfg.learner_command,
                timeout=cfg.external_timeout,
                tag=tag,
                alphabet=train.alphabet,
            )

    return run


def make_fit_predict(cfg: ExperimentConfig) -> FitPredict:
    if cfg.learner_command is None:
        return builtin_fit_predict(cfg.train_cfg)
    return external_fit_predict_boundary(cfg)


def _accuracy(fit_predict: FitPredict, train, eval_set, tag, seed) -> float:
    preds = fit_predict(train, eval_set.examples, tag, seed)
    return accuracy_against(preds, eval_set).accuracy


# ---------------------------------------------------------------------------
# Procedure steps
# ---------------------------------------------------------------------------


def train_oracle(
    full: LabeledDataset,
    cfg: ExperimentConfig,
    eval_set: LabeledDataset,
    fit_predict: FitPredict | None = None,
) -> IterationRecord:
    fit_predict = fit_predict or make_fit_predict(cfg)
    acc = _accuracy(fit_predict, full, eval_set, "oracle", derive_seed(cfg.seed, 2))
    return IterationRecord("oracle", None, 0, len(full), 0, acc, 0.0)


def train_baseline(
    train70: LabeledDataset,
    cfg: ExperimentConfig,
    eval_set: LabeledDataset,
    fit_predict: FitPredict | None = None,
) -> IterationRecord:
    fit_predict = fit_predict or make_fit_predict(cfg)
    acc = _accuracy(fit_predict, train70, eval_set, "baseline", derive_seed(cfg.seed, 3))
    return IterationRecord("baseline", None, 0, len(train70), 0, acc, 0.0)


def run_iteration(
    train: LabeledDataset,
    pool: UnlabeledPool,
    strategy: StrategyKind,
    cfg: ExperimentConfig,
    eval_set: LabeledDataset,
    iteration: int,
    arm: int = 0,
    split_base: LabeledDataset | None = None,
    fit_predict: FitPredict | None = None,
) -> tuple[LabeledDataset, UnlabeledPool, IterationRecord]:
    """One active-learning iteration for one strategy arm.

    Splits the base three ways, fits the three members, polls the pool,
    augments, then fits a fresh combined model on the augmented train set.
    An empty selection is a recorded no-op, not an error: small pools
    legitimately produce zero agreement.
    """
    fit_predict = fit_predict or make_fit_predict(cfg)
    base = split_base if split_base is not None else train
    parts = three_way_split(
        base, cfg.split_mode, derive_seed(cfg.seed, 4, arm, iteration, 0)
    )
    preds = [
        fit_predict(
            part,
            pool.examples,
            f"m{j + 1}",
            derive_seed(cfg.seed, 4, arm, iteration, j + 1),
        )
        for j, part in enumerate(parts)
    ]
    selections = select(strategy, preds[0], preds[1], preds[2], pool)

    predicted = [s for s in selections if s.provenance is Provenance.PREDICTED]
    wrong = sum(1 for s in predicted if s.assigned_label != pool.hidden_labels[s.id])
    error_rate = wrong / len(predicted) if predicted else 0.0

    new_train, new_pool = apply_augmentation(train, pool, selections)
    acc = _accuracy(
        fit_predict,
        new_train,
        eval_set,
        f"combined-i{iteration}",
        derive_seed(cfg.seed, 4, arm, iteration, 4),
    )
    record = IterationRecord(
        "strategy",
        strategy.value,
        iteration,
        len(new_train),
        len(selections),
        acc,
        error_rate,
    )
    return new_train, new_pool, record


def run_experiment(cfg: ExperimentConfig) -> RunLedger:
    """Execute the full procedure and return the run ledger."""
    cfg.validate()
    full, eval_set = load_source(cfg)
    fit_predict = make_fit_predict(cfg)

    oracle = train_oracle(full, cfg, eval_set, fit_predict)
    train70, pool0 = holdout_split(
        full, cfg.train_fraction, cfg.stratified, derive_seed(cfg.seed, 1)
    )
    baseline = train_baseline(train70, cfg, eval_set, fit_predict)

    strategy_records: dict[str, list[IterationRecord]] = {}
    random_records: dict[str, IterationRecord] = {}
    for arm, strategy in enumerate(cfg.strategies):
        train, pool = train70, pool0
        records: list[IterationRecord] = []
        for i in range(1, cfg.iterations + 1):
            split_base = train if cfg.carry_forward else train70
            train, pool, record = run_iteration(
                train,
                pool,
                strategy,
                cfg,
                eval_set,
                i,
                arm=arm,
                split_base=split_base,
                fit_predict=fit_predict,
            )
            records.append(record)
        strategy_records[strategy.value] = records

        # Random control: same final sample count, drawn uniformly from the pool.
        extra = len(train) - len(train70)
        draws = random_select(pool0, extra, derive_seed(cfg.seed, 5, arm, 0))
        random_train, _ = apply_augmentation(train70, pool0, draws)
        acc = _accuracy(
            fit_predict,
            random_train,
            eval_set,
            f"random-{strategy.value}",
            derive_seed(cfg.seed, 5, arm, 1),
        )
        random_records[strategy.value] = IterationRecord(
            "random",
            strategy.value,
            cfg.iterations,
            len(random_train),
            extra,
            acc,
            0.0,
        )
        assert len(random_train) == records[-1].train_size

    return RunLedger(
        oracle=oracle,
        baseline=baseline,
        strategy_records=strategy_records,
        random_records=random_records,
        config_echo=config_echo(cfg),
        decisions_echo=decisions_echo(cfg),
    )


def load_source(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Materialize (full train set, eval set) from the configured source."""
    if isinstance(cfg.source, BlobSpec):
        spec = cfg.source
        both = generate_blobs(
            spec.n + spec.n_eval,
            spec.k,
            spec.dim,
            spec.separation,
            spec.sigma,
            derive_seed(cfg.seed, 0),
        )
        full = LabeledDataset(both.examples[: spec.n], both.alphabet)
        eval_set = LabeledDataset(both.examples[spec.n :], both.alphabet)
        return full, eval_set
    if isinstance(cfg.source, CsvSpec):
        full = load_csv(cfg.source.train_path, cfg.source.label_column)
        eval_set = load_csv(
            cfg.source.eval_path, cfg.source.label_column, alphabet=full.alphabet
        )
        return full, eval_set
    raise ConfigError(f"unknown data source {cfg.source!r}")


# ---------------------------------------------------------------------------
# Ledger serialization
# ---------------------------------------------------------------------------

LEDGER_CSV_COLUMNS = [
    "arm",
    "strategy",
    "iteration",
    "train_size",
    "selected_count",
    "accuracy",
    "label_error_rate",
]


def config_echo(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.source, BlobSpec):
        source = {
            "type": "blobs",
            "n": cfg.source.n,
            "k": cfg.source.k,
            "dim": cfg.source.dim,
            "separation": cfg.source.separation,
            "sigma": cfg.source.sigma,
            "n_eval": cfg.source.n_eval,
        }
    else:
        source = {
            "type": "csv",
            "train_path": cfg.source.train_path,
            "eval_path": cfg.source.eval_path,
            "label_column": cfg.source.label_column,
        }
    return {
        "source": source,
        "train_fraction": cfg.train_fraction,
        "stratified": cfg.stratified,
        "split_mode": cfg.split_mode.value,
        "strategies": [s.value for s in cfg.strategies],
        "iterations": cfg.iterations,
        "train_cfg": {
            "epochs": cfg.train_cfg.epochs,
            "learning_rate": cfg.train_cfg.learning_rate,
            "l2": cfg.train_cfg.l2,
            "batch_size": cfg.train_cfg.batch_size,
        },
        "learner": (
            "builtin-softmax"
            if cfg.learner_command is None
            else "external: " + (
                cfg.learner_command
                if isinstance(cfg.learner_command, str)
                else " ".join(cfg.learner_command)
            )
        ),
        "carry_forward": cfg.carry_forward,
        "seed": cfg.seed,
    }


def decisions_echo(cfg: ExperimentConfig) -> dict:
    """Every behavioral choice a reader needs to reproduce the numbers."""
    return {
        "split_mode": cfg.split_mode.value,
        "stratified_holdout": cfg.stratified,
        "argmax_tie_break": "lowest_class_index",
        "any2_includes_unanimous": True,
        "carry_forward_augmented_base": cfg.carry_forward,
        "random_control_source": "pool",
        "seed_derivation": "numpy SeedSequence(master, spawn_key=path)",
    }


def _record_to_dict(r: IterationRecord) -> dict:
    return {
        "arm": r.arm,
        "strategy": r.strategy,
        "iteration": r.iteration,
        "train_size": r.train_size,
        "selected_count": r.selected_count,
        "accuracy": r.accuracy,
        "label_error_rate": r.label_error_rate,
    }


def _record_from_dict(d: dict) -> IterationRecord:
    return IterationRecord(
        arm=d["arm"],
        strategy=d["strategy"],
        iteration=int(d["iteration"]),
        train_size=int(d["train_size"]),
        selected_count=int(d["selected_count"]),
        accuracy=float(d["accuracy"]),
        label_error_rate=float(d["label_error_rate"]),
    )


def ledger_to_json(ledger: RunLedger) -> str:
    doc = {
        "config": ledger.config_echo,
        "decisions": ledger.decisions_echo,
        "records": [_record_to_dict(r) for r in ledger.all_records()],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def ledger_from_json(text: str) -> RunLedger:
    try:
        doc = json.loads(text)
        records = [_record_from_dict(d) for d in doc["records"]]
        oracle = next(r for r in records if r.arm == "oracle")
        baseline = next(r for r in records if r.arm == "baseline")
    except (json.JSONDecodeError, KeyError, StopIteration, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed ledger: {exc}") from exc
    strategy_records: dict[str, list[IterationRecord]] = {}
    random_records: dict[str, IterationRecord] = {}
    for r in records:
        if r.arm == "strategy":
            strategy_records.setdefault(r.strategy, []).append(r)
        elif r.arm == "random":
            random_records[r.strategy] = r
    missing = [s for s in strategy_records if s not in random_records]
    if missing:
        raise ConfigError(f"malformed ledger: no random control for {missing}")
    return RunLedger(
        oracle=oracle,
        baseline=baseline,
        strategy_records=strategy_records,
        random_records=random_records,
        config_echo=doc.get("config", {}),
        decisions_echo=doc.get("decisions", {}),
    )


def ledger_to_csv(ledger: RunLedger) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(LEDGER_CSV_COLUMNS)
    for r in ledger.all_records():
        writer.writerow(
            [
                r.arm,
                r.strategy or "",
                r.iteration,
                r.train_size,
                r.selected_count,
                repr(r.accuracy),
                repr(r.label_error_rate),
            ]
        )
    return buf.getvalue()


def write_ledger(ledger: RunLedger, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "ledger.json"
    csv_path = out_dir / "ledger.csv"
    json_path.write_text(ledger_to_json(ledger), encoding="utf-8")
    csv_path.write_text(ledger_to_csv(ledger), encoding="utf-8")
    return json_path, csv_path
