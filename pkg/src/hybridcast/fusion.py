"""Join forecasts with sentiment, write the text-to-text corpus, fit the linear fuser."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .convlstm import PredictionSeries
from .sentiment import SentimentInterval
from .timeseries import OhlcvSeries

TEXT_TEMPLATE = "LSTM prediction {p:.4f} and sentiment score {s:.4f}"
TARGET_TEMPLATE = "actual target {v:.4f}"
_NUM = r"(-?\d+(?:\.\d+)?)"
_TEXT_RE = re.compile(rf"LSTM prediction {_NUM} and sentiment score {_NUM}")
_TARGET_RE = re.compile(rf"actual target {_NUM}")


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionRecord:
    date: np.datetime64
    lstm_prediction: float
    w_cs: float
    actual: float | None = None

    def __post_init__(self):
        if not -1 <= self.w_cs <= 1:
            raise ValueError("w_cs must lie in [-1, 1]")


def time_map(predictions: PredictionSeries, sentiments: Sequence[SentimentInterval],
             actuals: OhlcvSeries | None = None, align: str = "target") -> list[FusionRecord]:
    """Inner-join daily forecasts with daily sentiment buckets.

    ``align="target"`` pairs a forecast with the sentiment of the day it
    forecasts; ``align="issue"`` pairs it with the sentiment of the day the
    forecast is made (its last input day), so no same-day news leaks in.
    Forecasts outside the news coverage are dropped, which shortens the
    prediction series to the most recent overlap.  Records carry the
    forecast's target date and, when available, the actual close.
    """
    if align not in ("target", "issue"):
        raise ValueError(f"align must be 'target' or 'issue', got {align!r}")
    by_day: dict[np.datetime64, float] = {}
    for iv in sentiments:
        day = np.datetime64(iv.start.date(), "D")
        if day in by_day:
            raise FusionError(f"more than one sentiment interval on {day}; bucket by day first")
        by_day[day] = iv.w_cs
    close = {}
    if actuals is not None:
        close = dict(zip(actuals.dates.tolist(), actuals.close.tolist()))

    keys = predictions.dates if align == "target" else predictions.issue_dates
    records = []
    for date, key, value in zip(predictions.dates, keys, predictions.values):
        if key not in by_day:
            continue
        records.append(FusionRecord(date, float(value), by_day[key], close.get(date.item())))
    if not records:
        raise FusionError("no overlapping intervals between predictions and sentiment")
    records.sort(key=lambda r: r.date)
    return records


def emit_corpus(records: Sequence[FusionRecord]) -> str:
    """One ``{"text": ..., "target": ...}`` JSON object per line, LF-terminated."""
    lines = []
    for i, r in enumerate(records):
        if r.actual is None:
            raise FusionError(f"record {i} ({r.date}) has no actual value")
        obj = {"text": TEXT_TEMPLATE.format(p=r.lstm_prediction, s=r.w_cs),
               "target": TARGET_TEMPLATE.format(v=r.actual)}
        lines.append(json.dumps(obj, ensure_ascii=False) + "\n")
    return "".join(lines)


def parse_corpus(jsonl: str) -> list[tuple[float, float, float]]:
    """Recover ``(prediction, sentiment, actual)`` triples from corpus text."""
    out = []
    for lineno, line in enumerate(jsonl.splitlines(), start=1):
        obj = json.loads(line)
        if list(obj) != ["text", "target"]:
            raise FusionError(f"line {lineno}: expected keys text, target")
        m, t = _TEXT_RE.fullmatch(obj["text"]), _TARGET_RE.fullmatch(obj["target"])
        if m is None or t is None:
            raise FusionError(f"line {lineno}: does not match the corpus template")
        out.append((float(m.group(1)), float(m.group(2)), float(t.group(1))))
    return out


def records_to_csv(records: Sequence[FusionRecord]) -> str:
    lines = ["date,lstm_pred,w_cs,actual"]
    for r in records:
        actual = "" if r.actual is None else repr(float(r.actual))
        lines.append(f"{r.date},{float(r.lstm_prediction)!r},{float(r.w_cs)!r},{actual}")
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[FusionRecord]:
    rows = [line.split(",") for line in text.strip().splitlines()]
    if not rows or rows[0] != ["date", "lstm_pred", "w_cs", "actual"]:
        raise FusionError("expected header date,lstm_pred,w_cs,actual")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            date, p, s, v = row
            records.append(FusionRecord(np.datetime64(date, "D"), float(p), float(s),
                                        float(v) if v.strip() else None))
        except ValueError as exc:
            raise FusionError(f"line {lineno}: {exc}") from None
    return records


@dataclass(frozen=True)
class SurrogateModel:
    """``fused = a * lstm_prediction + b * w_cs + c``, fit by least squares.

    Desk-scale stand-in for fine-tuning a sequence-to-sequence model on the
    emitted corpus.
    """

    a: float
    b: float
    c: float
    residual_mse: float
    n: int

    def predict(self, p, s):
        return self.a * np.asarray(p, dtype=np.float64) + self.b * np.asarray(s, dtype=np.float64) + self.c

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SurrogateModel":
        return cls(**json.loads(text))


def design_matrix(records: Sequence[FusionRecord]) -> np.ndarray:
    p = np.array([r.lstm_prediction for r in records], dtype=np.float64)
    s = np.array([r.w_cs for r in records], dtype=np.float64)
    return np.column_stack([p, s, np.ones_like(p)])


def fit_surrogate(records: Sequence[FusionRecord]) -> SurrogateModel:
    """Solve the normal equations for ``actual ~ a*p + b*s + c``."""
    if len(records) < 3:
        raise FusionError(f"need at least 3 records, got {len(records)}")
    if any(r.actual is None for r in records):
        raise FusionError("every record needs an actual value")
    x = design_matrix(records)
    y = np.array([r.actual for r in records], dtype=np.float64)
    for j, name in enumerate(("lstm_prediction", "w_cs")):
        col = x[:, j]
        if np.ptp(col) <= 1e-12 * max(1.0, float(np.max(np.abs(col)))):
            raise FusionError(f"rank deficient design: column {name} is constant")
    gram = x.T @ x
    if np.linalg.matrix_rank(gram) < 3:
        raise FusionError("rank deficient design: lstm_prediction and w_cs are collinear")
    a, b, c = np.linalg.solve(gram, x.T @ y)
    resid = y - x @ np.array([a, b, c])
    coef = (float(a), float(b), float(c))
    if not all(math.isfinite(v) for v in coef):
        raise FusionError("non-finite surrogate coefficients")
    return SurrogateModel(*coef, residual_mse=float(np.mean(resid * resid)), n=len(records))


def surrogate_predict(model: SurrogateModel, p, s):
    out = model.predict(p, s)
    return float(out) if out.ndim == 0 else out
