"""Render a run ledger as a markdown report plus per-strategy CSV series."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .experiment import IterationRecord, RunLedger


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _strategy_rows(records: list[IterationRecord], random_rec: IterationRecord):
    rows = [
        (r.arm, r.iteration, r.train_size, r.selected_count, r.accuracy, r.label_error_rate)
        for r in records
    ]
    rows.append(
        (
            random_rec.arm,
            random_rec.iteration,
            random_rec.train_size,
            random_rec.selected_count,
            random_rec.accuracy,
            random_rec.label_error_rate,
        )
    )
    return rows


def render_markdown(ledger: RunLedger) -> str:
    """Human-readable summary of one run."""

    out = io.StringIO()
    out.write("# Run report\n\n")

    out.write("## Reference models\n\n")
    out.write("| arm | train size | eval accuracy |\n")
    out.write("| --- | ---: | ---: |\n")
    out.write(
        f"| oracle | {ledger.oracle.train_size} | {_fmt(ledger.oracle.accuracy)} |\n"
    )
    out.write(
        f"| baseline | {ledger.baseline.train_size} | {_fmt(ledger.baseline.accuracy)} |\n\n"
    )

    for name, records in ledger.strategy_records.items():
        random_rec = ledger.random_records[name]
        out.write(f"## Strategy {name}\n\n")
        out.write("| arm | iteration | train size | selected | accuracy | label error rate |\n")
        out.write("| --- | ---: | ---: | ---: | ---: | ---: |\n")
        for arm, it, size, sel, acc, ler in _strategy_rows(records, random_rec):
            out.write(
                f"| {arm} | {it} | {size} | {sel} | {_fmt(acc)} | {_fmt(ler)} |\n"
            )
        out.write("\n")

    out.write("## Final comparison\n\n")
    out.write("| strategy | final accuracy | random control | vs baseline |\n")
    out.write("| --- | ---: | ---: | ---: |\n")
    for name, records in ledger.strategy_records.items():
        final = records[-1].accuracy
        rand = ledger.random_records[name].accuracy
        delta = final - ledger.baseline.accuracy
        out.write(f"| {name} | {_fmt(final)} | {_fmt(rand)} | {delta:+.4f} |\n")
    out.write("\n")
    return out.getvalue()


SERIES_COLUMNS = [
    "arm",
    "iteration",
    "train_size",
    "selected_count",
    "accuracy",
    "label_error_rate",
]


def series_csv(ledger: RunLedger, strategy: str) -> str:
    """Exact-precision series for one strategy arm plus its random control."""

    records = ledger.strategy_records[strategy]
    random_rec = ledger.random_records[strategy]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for arm, it, size, sel, acc, ler in _strategy_rows(records, random_rec):
        writer.writerow([arm, it, size, sel, repr(acc), repr(ler)])
    return buf.getvalue()


def write_report(ledger: RunLedger, out_dir: str | Path) -> list[Path]:
    """Write report.md and one series_<strategy>.csv per strategy arm."""

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    md = out_dir / "report.md"
    md.write_text(render_markdown(ledger), encoding="utf-8")
    written.append(md)

    for name in ledger.strategy_records:
        path = out_dir / f"series_{name}.csv"
        path.write_text(series_csv(ledger, name), encoding="utf-8")
        written.append(path)
    return written
