"""Pluggable learner boundary with a built-in softmax-regression learner.

The built-in learner is deliberately simple: zero-initialized multinomial
logistic regression trained by mini-batch gradient descent. Zero init keeps
baseline behavior analytically checkable; model diversity comes from the data
splits, not from random restarts.

External learners plug in through a subprocess contract:

    <command> --train <csv> --pool <csv> --out <predictions> --epochs N --seed S

where <predictions> is a CSV `id,label,score` (header row, UTF-8, one line
per pool example, label as a class name, score a real in [0, 1]).
"""

from __future__ import annotations

import csv
import io
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Example, LabeledDataset, load_csv, load_pool_csv


class LearnerError(RuntimeError):
    """Raised when training fails (divergence, shape mismatch, bad input)."""


class ExternalLearnerError(LearnerError):
    """Raised when an external learner invocation violates its contract."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.1
    l2: float = 0.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise LearnerError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise LearnerError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2 < 0:
            raise LearnerError(f"l2 must be non-negative, got {self.l2}")
        if self.batch_size < 1:
            raise LearnerError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class Model:
    """Fitted softmax-regression parameters over a class alphabet."""

    kind: str
    weights: np.ndarray  # (k, dim)
    bias: np.ndarray  # (k,)
    alphabet: tuple[str, ...]

    def __post_init__(self) -> None:
        k = len(self.alphabet)
        if self.weights.shape[0] != k or self.bias.shape != (k,):
            raise LearnerError(
                f"parameter shapes {self.weights.shape}/{self.bias.shape} "
                f"inconsistent with {k} classes"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise LearnerError("non-finite model parameters")


@dataclass(frozen=True)
class PredictionSet:
    """One model's labels and confidence scores over a collection of examples."""

    model_tag: str
    entries: dict[str, tuple[int, float]]  # id -> (label index, score)

    def ids(self) -> list[str]:
        return list(self.entries)

    def label_of(self, ex_id: str) -> int:
        return self.entries[ex_id][0]


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    n_eval: int


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _loss_grad_arrays(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    n = x.shape[0]
    logits = x @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = -log_probs[np.arange(n), y].mean() + 0.5 * l2 * float(np.sum(weights**2))
    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_w = delta.T @ x + l2 * weights
    grad_b = delta.sum(axis=0)
    return float(loss), grad_w, grad_b


def loss_and_gradient(
    model: Model, batch: LabeledDataset, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2/2)*||W||^2 and its exact analytic gradient.

    Returns (loss, grad_weights, grad_bias). The bias is not regularized.
    """
    if not batch.examples:
        raise LearnerError("empty batch")
    x = batch.feature_matrix()
    if x.shape[1] != model.weights.shape[1]:
        raise LearnerError(
            f"feature dimension {x.shape[1]} does not match model ({model.weights.shape[1]})"
        )
    return _loss_grad_arrays(model.weights, model.bias, x, batch.label_vector(), l2)


def fit_softmax(train: LabeledDataset, cfg: TrainConfig) -> Model:
    """Fit softmax regression with mini-batch gradient descent.

    Weights start at zero and take exactly cfg.epochs passes over a seeded
    shuffle of the training set. Deterministic for fixed (train, cfg). Raises
    on a non-finite loss rather than clamping: silent repair would corrupt
    experiments downstream.
    """
    if not train.examples:
        raise LearnerError("cannot fit on an empty dataset")
    x_all = train.feature_matrix()
    y_all = train.label_vector()
    weights = np.zeros((train.n_classes, train.dim))
    bias = np.zeros(train.n_classes)
    rng = np.random.default_rng(cfg.seed)
    n = len(train.examples)

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad_w, grad_b = _loss_grad_arrays(
                weights, bias, x_all[idx], y_all[idx], cfg.l2
            )
            if not np.isfinite(loss):
                raise LearnerError(
                    f"training diverged (non-finite loss at lr={cfg.learning_rate})"
                )
            weights = weights - cfg.learning_rate * grad_w
            bias = bias - cfg.learning_rate * grad_b

    return Model("softmax", weights, bias, train.alphabet)


def predict(
    model: Model, examples: Sequence[Example], tag: str | None = None
) -> PredictionSet:
    """Predict labels and max-probability scores for a collection of examples.

    Argmax ties break toward the lowest class index.
    """
    tag = tag if tag is not None else model.kind
    if not examples:
        return PredictionSet(tag, {})
    x = np.array([ex.features for ex in examples], dtype=float)
    if x.shape[1] != model.weights.shape[1]:
        raise LearnerError(
            f"feature dimension {x.shape[1]} does not match model ({model.weights.shape[1]})"
        )
    probs = _softmax(x @ model.weights.T + model.bias)
    labels = probs.argmax(axis=1)
    entries = {
        ex.id: (int(labels[i]), float(probs[i, labels[i]]))
        for i, ex in enumerate(examples)
    }
    return PredictionSet(tag, entries)


def evaluate(model: Model, eval_set: LabeledDataset) -> Metrics:
    if not eval_set.examples:
        raise LearnerError("empty evaluation set")
    preds = predict(model, eval_set.examples)
    correct = sum(
        1 for ex in eval_set.examples if preds.entries[ex.id][0] == ex.label
    )
    return Metrics(accuracy=correct / len(eval_set.examples), n_eval=len(eval_set.examples))


def accuracy_against(pset: PredictionSet, labeled: LabeledDataset) -> Metrics:
    """Accuracy of an arbitrary PredictionSet against a labeled reference."""
    if not labeled.examples:
        raise LearnerError("empty evaluation set")
    missing = [ex.id for ex in labeled.examples if ex.id not in pset.entries]
    if missing:
        raise LearnerError(f"predictions missing {len(missing)} eval ids (first: {missing[0]!r})")
    correct = sum(
        1 for ex in labeled.examples if pset.entries[ex.id][0] == ex.label
    )
    return Metrics(accuracy=correct / len(labeled.examples), n_eval=len(labeled.examples))


# ---------------------------------------------------------------------------
# Prediction wire format
# ---------------------------------------------------------------------------


def write_predictions_csv(
    pset: PredictionSet, alphabet: Sequence[str], path: str | Path
) -> None:
    Path(path).write_bytes(predictions_to_bytes(pset, alphabet))


def predictions_to_bytes(pset: PredictionSet, alphabet: Sequence[str]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", "label", "score"])
    for ex_id, (label, score) in pset.entries.items():
        writer.writerow([ex_id, alphabet[label], repr(score)])
    return buf.getvalue().encode("utf-8")


def predictions_from_bytes(
    data: bytes, alphabet: Sequence[str], tag: str
) -> PredictionSet:
    label_to_idx = {name: i for i, name in enumerate(alphabet)}
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise ExternalLearnerError("prediction file is empty") from None
    if header != ["id", "label", "score"]:
        raise ExternalLearnerError(f"bad prediction header {header!r}")
    entries: dict[str, tuple[int, float]] = {}
    for n, row in enumerate(reader):
        if len(row) != 3:
            raise ExternalLearnerError(f"prediction row {n} has {len(row)} cells")
        ex_id, label, score_text = row
        if ex_id in entries:
            raise ExternalLearnerError(f"duplicate prediction id {ex_id!r}")
        if label not in label_to_idx:
            raise ExternalLearnerError(f"unknown label {label!r} in prediction row {n}")
        try:
            score = float(score_text)
        except ValueError:
            raise ExternalLearnerError(f"non-numeric score {score_text!r} in row {n}") from None
        if not np.isfinite(score) or not 0.0 <= score <= 1.0:
            raise ExternalLearnerError(f"score {score!r} outside [0, 1] in row {n}")
        entries[ex_id] = (label_to_idx[label], score)
    return PredictionSet(tag, entries)


def read_predictions_csv(
    path: str | Path, alphabet: Sequence[str], tag: str = "external"
) -> PredictionSet:
    path = Path(path)
    if not path.exists():
        raise ExternalLearnerError(f"prediction file missing: {path}")
    return predictions_from_bytes(path.read_bytes(), alphabet, tag)


# ---------------------------------------------------------------------------
# External learner adapter
# ---------------------------------------------------------------------------


def external_fit_predict(
    train_file: str | Path,
    pool_file: str | Path,
    cfg: TrainConfig,
    command: Sequence[str] | str,
    timeout: float = 3600.0,
    tag: str = "external",
    alphabet: Sequence[str] | None = None,
) -> PredictionSet:
    """Invoke an external learner process and parse its prediction file.

    Only epochs and seed travel on the command line; any other
    hyperparameters belong to the external learner itself. The returned
    predictions must cover exactly the pool ids. When `alphabet` is omitted
    it is inferred (sorted) from the training file's label names.
    """
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if not argv:
        raise ExternalLearnerError("empty learner command")
    train_file = Path(train_file)
    pool_file = Path(pool_file)
    if alphabet is None:
        alphabet = load_csv(train_file).alphabet
    pool_ids = {ex.id for ex in load_pool_csv(pool_file)}

    with tempfile.TemporaryDirectory(prefix="tritrain-ext-") as workdir:
        out_path = Path(workdir) / "predictions.csv"
        full_cmd = argv + [
            "--train", str(train_file),
            "--pool", str(pool_file),
            "--out", str(out_path),
            "--epochs", str(cfg.epochs),
            "--seed", str(cfg.seed),
        ]
        try:
            proc = subprocess.run(
                full_cmd, capture_output=True, text=True, timeout=timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise ExternalLearnerError(
                f"external learner timed out after {timeout}s: {argv[0]}"
            ) from exc
        except OSError as exc:
            raise ExternalLearnerError(f"cannot run {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.strip().splitlines()
            detail = stderr[-1] if stderr else "(no stderr)"
            raise ExternalLearnerError(
                f"external learner exited {proc.returncode}: {detail}"
            )
        pset = read_predictions_csv(out_path, alphabet, tag=tag)

    got = set(pset.entries)
    if got != pool_ids:
        missing = sorted(pool_ids - got)[:3]
        extra = sorted(got - pool_ids)[:3]
        raise ExternalLearnerError(
            f"prediction ids do not cover the pool (missing {missing}, extra {extra})"
        )
    return pset
