"""Confusion counts and accuracy/precision/recall for nomination decisions."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping
from urllib.parse import urljoin

logger = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "Conference",
    "Total Papers",
    "TP",
    "TN",
    "FP",
    "FN",
    "Accuracy",
    "Precision",
    "Recall",
)


class MissingPrediction(ValueError):
    def __init__(self, urls: list[str]):
        self.urls = urls
        super().__init__(f"{len(urls)} labeled url(s) have no prediction: {', '.join(urls[:5])}")


@dataclass(frozen=True)
class GroundTruthLabel:
    url: str
    is_positive: bool


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )


def round_half_up(value: Fraction, places: int = 2) -> float:
    """Round an exact rational half-up; avoids binary float ties going the wrong way."""
    scale = 10**places
    return math.floor(value * scale + Fraction(1, 2)) / scale


def round_down(value: Fraction, places: int = 2) -> float:
    """Truncate an exact non-negative rational to ``places`` decimals."""
    scale = 10**places
    return math.floor(value * scale) / scale


ROUNDING = {"half_up": round_half_up, "down": round_down}
# Published per-dataset tables are truncated (20/22 is shown as 0.90), so
# display rounding truncates by default; "half_up" is available on request.
DISPLAY_ROUNDING = "down"


@dataclass(frozen=True)
class MetricsReport:
    """Exact rationals plus their 2 dp display values. ``None`` stands for UNDEFINED."""

    counts: ConfusionCounts
    accuracy: Fraction | None
    precision: Fraction | None
    recall: Fraction | None
    dataset_name: str = ""

    def rounded(self, places: int = 2, mode: str = DISPLAY_ROUNDING) -> dict[str, float | None]:
        fn = ROUNDING[mode]
        return {
            name: None if value is None else fn(value, places)
            for name, value in (
                ("accuracy", self.accuracy),
                ("precision", self.precision),
                ("recall", self.recall),
            )
        }

    def to_dict(self) -> dict:
        def exact(value):
            return None if value is None else f"{value.numerator}/{value.denominator}"

        return {
            "dataset_name": self.dataset_name,
            "total": self.counts.total,
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "exact": {
                "accuracy": exact(self.accuracy),
                "precision": exact(self.precision),
                "recall": exact(self.recall),
            },
            "rounding": DISPLAY_ROUNDING,
            "rounded": self.rounded(),
        }


def _ratio(num: int, den: int) -> Fraction | None:
    return Fraction(num, den) if den else None


def confusion(
    predictions: Mapping[str, bool], labels: Iterable[GroundTruthLabel]
) -> ConfusionCounts:
    labels = list(labels)
    missing = [label.url for label in labels if label.url not in predictions]
    if missing:
        raise MissingPrediction(missing)
    tp = tn = fp = fn = 0
    for label in labels:
        predicted = bool(predictions[label.url])
        if predicted and label.is_positive:
            tp += 1
        elif predicted:
            fp += 1
        elif label.is_positive:
            fn += 1
        else:
            tn += 1
    extra = set(predictions) - {label.url for label in labels}
    if extra:
        logger.warning("%d prediction(s) have no label and were ignored", len(extra))
    return ConfusionCounts(tp, tn, fp, fn)


def metrics(counts: ConfusionCounts, dataset_name: str = "") -> MetricsReport:
    return MetricsReport(
        counts=counts,
        accuracy=_ratio(counts.tp + counts.tn, counts.total),
        precision=_ratio(counts.tp, counts.tp + counts.fp),
        recall=_ratio(counts.tp, counts.tp + counts.fn),
        dataset_name=dataset_name,
    )


def load_labels(path: str | Path, base_url: str | None = None) -> list[GroundTruthLabel]:
    """Read a ``url,is_positive`` CSV.

    Relative urls are resolved against ``base_url`` so a corpus can label
    pages without knowing which host serves them.
    """
    labels: list[GroundTruthLabel] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"url", "is_positive"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header url,is_positive")
        for row in reader:
            url = row["url"].strip()
            if base_url:
                url = urljoin(base_url, url)
            flag = row["is_positive"].strip()
            if flag not in ("0", "1"):
                raise ValueError(f"{path}: is_positive must be 0 or 1, got {flag!r}")
            if url in seen:
                raise ValueError(f"{path}: duplicate url {url}")
            seen.add(url)
            labels.append(GroundTruthLabel(url, flag == "1"))
    return labels


def load_predictions(path: str | Path) -> dict[str, bool]:
    """Predictions come as a JSON object ``{url: bool}`` or a CSV like the labels file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return {url: bool(value) for url, value in json.loads(text).items()}
    rows = csv.DictReader(text.splitlines())
    column = "is_positive" if rows.fieldnames and "is_positive" in rows.fieldnames else "predicted"
    return {row["url"].strip(): row[column].strip().lower() in ("1", "true", "yes") for row in rows}


def _fmt(value: float | None) -> str:
    return "UNDEF" if value is None else f"{value:.2f}"


def format_table(reports: Iterable[MetricsReport]) -> str:
    """Aligned text table with the usual per-dataset confusion/metric columns."""
    rows = [list(TABLE_COLUMNS)]
    for report in reports:
        r = report.rounded()
        c = report.counts
        rows.append(
            [
                report.dataset_name or "-",
                str(c.total),
                str(c.tp),
                str(c.tn),
                str(c.fp),
                str(c.fn),
                _fmt(r["accuracy"]),
                _fmt(r["precision"]),
                _fmt(r["recall"]),
            ]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for n, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_report(report: MetricsReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out_dir / "metrics.txt").write_text(format_table([report]) + "\n")
