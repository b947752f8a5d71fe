"""Forecast error metrics and the baseline-vs-hybrid comparison table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ROWS = (
    ("mae", "Mean Absolute Error (MAE)"),
    ("mse", "Mean Squared Error (MSE)"),
    ("rmse", "Root Mean Squared Error (RMSE)"),
    ("mape", "Mean Absolute Percentage Error (MAPE)"),
)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    rmse: float
    mape: float | None  # percent; None when not requested
    n: int


def compute_metrics(actual, predicted, mape: bool = True) -> MetricReport:
    y = np.asarray(actual, dtype=np.float64).ravel()
    yhat = np.asarray(predicted, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise MetricError(f"length mismatch: {y.size} actual vs {yhat.size} predicted")
    if y.size == 0:
        raise MetricError("empty series")
    e = y - yhat
    mse = float(np.mean(e * e))
    pct = None
    if mape:
        zeros = np.flatnonzero(y == 0)
        if zeros.size:
            raise MetricError(f"MAPE undefined: actual value is zero at index {zeros[0]}")
        pct = float(100.0 * np.mean(np.abs(e) / np.abs(y)))
    return MetricReport(float(np.mean(np.abs(e))), mse, math.sqrt(mse), pct, int(y.size))


def improvement(baseline: float, hybrid: float) -> float:
    """Percentage reduction of ``hybrid`` relative to ``baseline``."""
    if baseline == 0:
        return 0.0 if hybrid == 0 else -math.inf
    return 100.0 * (baseline - hybrid) / baseline


def compare_report(baseline: MetricReport, hybrid: MetricReport, fmt: str = "text",
                   names: tuple[str, str] = ("Convolutional LSTM", "Hybrid Model")) -> str:
    if baseline.n != hybrid.n:
        raise MetricError(f"reports cover different sample counts ({baseline.n} vs {hybrid.n})")
    rows = []
    for key, label in ROWS:
        b, h = getattr(baseline, key), getattr(hybrid, key)
        if b is None or h is None:
            continue
        rows.append((label, b, h, improvement(b, h)))
    if fmt == "csv":
        out = ["metric,baseline,hybrid,improvement_pct"]
        out += [f"{label},{b:.6f},{h:.6f},{imp:.2f}" for label, b, h, imp in rows]
        return "\n".join(out) + "\n"
    if fmt != "text":
        raise ValueError(f"format must be 'text' or 'csv', got {fmt!r}")
    width = max(len("Error Metrics"), *(len(r[0]) for r in rows))
    cols = [max(12, len(names[0])), max(12, len(names[1])), 11]
    head = (f"{'Error Metrics':<{width}}  {names[0]:>{cols[0]}}  {names[1]:>{cols[1]}}"
            f"  {'Improvement':>{cols[2]}}")
    out = [head, "-" * len(head)]
    for label, b, h, imp in rows:
        out.append(f"{label:<{width}}  {b:>{cols[0]}.6f}  {h:>{cols[1]}.6f}  {imp:>{cols[2] - 1}.2f}%")
    out.append(f"n = {baseline.n}")
    return "\n".join(out) + "\n"
