"""
Correctness by sentence gap: how often predictions are right when the head
and tail are in the same sentence (gap 0), adjacent sentences (gap 1) and so
on, with every gap of 5 or more in one bucket.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import pandas as pd

GAP_BUCKETS = ("0", "1", "2", "3", "4", "≥5")
LAST_BUCKET = len(GAP_BUCKETS) - 1


class GapRecord(Protocol):
    gold_label: str
    predicted_label: str
    sentence_gap: int


@dataclass(frozen=True)
class GapRow:
    bucket: str
    total: int
    correct_pct: float | None
    incorrect_pct: float | None


def gap_bucket(sentence_gap: int) -> str:
    """Name of the bucket of a sentence gap: "0" to "4", or "≥5"."""
    return GAP_BUCKETS[min(sentence_gap, LAST_BUCKET)]


def gap_analysis(records: Sequence[GapRecord]) -> list[GapRow]:
    """
    One row per bucket, always all six in order. Empty buckets have total 0
    and no percentages.
    """
    frame = pd.DataFrame({
        "bucket": [gap_bucket(record.sentence_gap) for record in records],
        "correct": [record.gold_label == record.predicted_label
                    for record in records],
    }, columns=["bucket", "correct"])
    counts = frame.groupby("bucket")["correct"].agg(["size", "sum"])
    rows = []
    for name in GAP_BUCKETS:
        if name not in counts.index:
            rows.append(GapRow(name, 0, None, None))
            continue
        total = int(counts.loc[name, "size"])
        correct_pct = 100 * int(counts.loc[name, "sum"]) / total
        rows.append(GapRow(name, total, correct_pct, 100 - correct_pct))
    return rows


def gap_rows_to_dicts(rows: Sequence[GapRow]) -> list[dict]:
    return [asdict(row) for row in rows]


def render_gap_table(rows: Sequence[GapRow], title: str | None = None) -> str:
    """Text table with the columns Gap, Total, Correct (%), Incorrect (%)."""
    frame = pd.DataFrame({
        "Gap": [row.bucket for row in rows],
        "Total": [row.total for row in rows],
        "Correct (%)": [_percent(row.correct_pct) for row in rows],
        "Incorrect (%)": [_percent(row.incorrect_pct) for row in rows],
    })
    table = frame.to_string(index=False)
    return f"{title}\n{table}" if title else table


def _percent(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"
