"""Gender mean accuracy (mA) and relative error reduction."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

from .errors import MetricInputError, UndefinedClassError


@dataclass(frozen=True)
class GenderConfusion:
    """Counts for one binary attribute; positives are label 1 (female)."""

    tp: int
    p: int
    tn: int
    n_neg: int

    def __post_init__(self):
        if not (0 <= self.tp <= self.p and 0 <= self.tn <= self.n_neg):
            raise MetricInputError(f"inconsistent counts {self}")
        if self.p + self.n_neg < 1:
            raise MetricInputError("confusion needs at least one example")


def _binary(values: Sequence[int], what: str) -> list[int]:
    out = []
    for v in values:
        if v not in (0, 1):
            raise MetricInputError(f"{what} must be 0 or 1, got {v!r}")
        out.append(int(v))
    return out


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> GenderConfusion:
    preds = _binary(predictions, "prediction")
    labs = _binary(labels, "label")
    if len(preds) != len(labs):
        raise MetricInputError(f"{len(preds)} predictions for {len(labs)} labels")
    if not labs:
        raise MetricInputError("no predictions")
    p = sum(labs)
    tp = sum(1 for y, l in zip(preds, labs) if l == 1 and y == 1)
    tn = sum(1 for y, l in zip(preds, labs) if l == 0 and y == 0)
    return GenderConfusion(tp, p, tn, len(labs) - p)


def mean_accuracy(conf: GenderConfusion) -> float:
    """Mean of positive-class and negative-class recall."""
    if conf.p == 0 or conf.n_neg == 0:
        raise UndefinedClassError(f"mA undefined with p={conf.p}, n_neg={conf.n_neg}")
    return (conf.tp / conf.p + conf.tn / conf.n_neg) / 2.0


def error_reduction(base_ma: float, new_ma: float) -> float:
    """Share of the baseline's remaining error (100 - mA) removed by the new model, in percent."""
    if not 0.0 <= base_ma < 100.0:
        if base_ma == 100.0:
            raise ZeroDivisionError("error reduction undefined for a perfect baseline")
        raise ValueError(f"baseline mA must be in [0, 100), got {base_ma}")
    if new_ma > 100.0:
        raise ValueError(f"new mA must not exceed 100, got {new_ma}")
    return 100.0 * (new_ma - base_ma) / (100.0 - base_ma)


def format_percent(value: float, places: int = 2) -> str:
    """Round half-even at the decimal value of ``repr(value)``."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN))


def read_predictions_csv(text: str) -> tuple[list[str], list[int], list[int]]:
    """Parse ``image_id,prediction,label`` rows (header required)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MetricInputError("empty predictions file") from None
    if header != ["image_id", "prediction", "label"]:
        raise MetricInputError(f"line 1: expected header image_id,prediction,label, got {','.join(header)}")
    ids, preds, labels = [], [], []
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise MetricInputError(f"line {reader.line_num}: expected 3 fields, got {len(row)}")
        try:
            pred, lab = int(row[1]), int(row[2])
        except ValueError:
            raise MetricInputError(f"line {reader.line_num}: non-integer prediction or label") from None
        ids.append(row[0])
        preds.append(pred)
        labels.append(lab)
    return ids, preds, labels
