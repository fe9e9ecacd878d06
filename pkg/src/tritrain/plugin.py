"""Reference external learner: the builtin model behind the plugin protocol.

Run as ``python -m tritrain.plugin --train t.csv --pool p.csv --out o.csv
--epochs N --seed S``. It fits the same softmax regression the library uses
in process, with every hyperparameter other than epochs and seed fixed at
the library defaults, so wrapping it as an external command reproduces an
in-process run exactly. It doubles as a working example for implementing
the protocol in any other language or framework.

Exit status: 0 on success, 1 on bad input data or training failure, 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .dataset import DatasetError, load_csv, load_pool_csv
from .learner import LearnerError, TrainConfig, fit_softmax, predict, write_predictions_csv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tritrain-plugin",
        description="Fit a softmax regression on --train and predict --pool.",
    )
    parser.add_argument("--train", required=True, help="labeled training CSV")
    parser.add_argument("--pool", required=True, help="unlabeled feature CSV")
    parser.add_argument("--out", required=True, help="where to write predictions CSV")
    parser.add_argument("--epochs", type=int, required=True, help="training epochs")
    parser.add_argument("--seed", type=int, required=True, help="shuffle seed")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.epochs < 1:
        print("error: --epochs must be >= 1", file=sys.stderr)
        return 2
    if args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return 2
    try:
        train = load_csv(args.train)
        pool = load_pool_csv(args.pool)
        cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
        model = fit_softmax(train, cfg)
        preds = predict(model, pool, tag="plugin")
        write_predictions_csv(preds, train.alphabet, args.out)
    except (DatasetError, LearnerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
