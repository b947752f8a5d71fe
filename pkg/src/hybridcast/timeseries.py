"""Daily OHLCV ingestion, z-score scaling and sliding-window datasets."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

COLUMNS = ("open", "high", "low", "close", "adj_close", "volume")
HEADER = ("date",) + COLUMNS
PRICE_COLUMNS = COLUMNS[:5]
DEFAULT_FEATURES = ("close", "volume")


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class OhlcvSeries:
    """Ordered daily bars. ``dates`` is ``datetime64[D]``, every other field float64."""

    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in COLUMNS:
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name!r} has {len(getattr(self, name))} rows, expected {n}")
        if n > 1 and not np.all(np.diff(self.dates.astype(np.int64)) > 0):
            raise DataError("timestamps must be strictly increasing")
        for name in PRICE_COLUMNS:
            if np.any(~(getattr(self, name) > 0)):
                raise DataError(f"non-positive {name} price")
        if np.any(~(self.volume >= 0)):
            raise DataError("negative volume")

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown column {name!r}; choose from {COLUMNS}")
        return getattr(self, name)

    def features(self, columns: Sequence[str] = DEFAULT_FEATURES) -> np.ndarray:
        """Stack the selected columns into an ``(N, F)`` matrix."""
        return np.column_stack([self.column(c) for c in columns]).astype(np.float64)

    def slice(self, start: int | None = None, stop: int | None = None) -> "OhlcvSeries":
        sl = slice(start, stop)
        return OhlcvSeries(self.dates[sl], *(getattr(self, c)[sl] for c in COLUMNS))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(HEADER) + "\n")
        for i in range(len(self)):
            vals = [f"{getattr(self, c)[i]:.6f}" for c in PRICE_COLUMNS]
            vals.append(f"{self.volume[i]:.0f}")
            buf.write(f"{self.dates[i]}," + ",".join(vals) + "\n")
        return buf.getvalue()


def load_ohlcv(csv_text: str) -> OhlcvSeries:
    """Parse ``date,open,high,low,close,adj_close,volume`` CSV text.

    Rows may appear in any order; the result is sorted by date.
    Errors carry the 1-based line number of the offending row.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input: missing header") from None
    if tuple(h.strip().lower() for h in header) != HEADER:
        raise DataError(f"line 1: expected header {','.join(HEADER)}, got {','.join(header)}")

    dates, rows = [], []
    seen: dict[np.datetime64, int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(HEADER):
            raise DataError(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
        try:
            day = np.datetime64(row[0].strip(), "D")
            values = [float(cell) for cell in row[1:]]
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if np.isnat(day):
            raise DataError(f"line {lineno}: missing date")
        if not all(np.isfinite(values)):
            raise DataError(f"line {lineno}: non-finite value")
        if any(v <= 0 for v in values[:5]):
            raise DataError(f"line {lineno}: non-positive price")
        if values[5] < 0:
            raise DataError(f"line {lineno}: negative volume")
        if day in seen:
            raise DataError(f"line {lineno}: duplicate date {day} (first seen on line {seen[day]})")
        seen[day] = lineno
        dates.append(day)
        rows.append(values)

    if not rows:
        raise DataError("no data rows")
    order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
    data = np.array(rows, dtype=np.float64)[order]
    return OhlcvSeries(np.array(dates, dtype="datetime64[D]")[order], *data.T.copy())


@dataclass(frozen=True)
class NormParams:
    """Per-feature mean and population standard deviation."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise DataError("mu and sigma must be 1-D arrays of equal length")
        if np.any(~(self.sigma > 0)):
            raise DataError("sigma must be positive for every feature")

    @property
    def n_features(self) -> int:
        return self.mu.shape[0]


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"expected a 1-D or 2-D array, got shape {arr.shape}")
    return arr


def zscore_fit(values, names: Sequence[str] | None = None) -> NormParams:
    x = _as_matrix(values)
    if x.shape[0] < 2:
        raise DataError("need at least 2 samples to fit normalization")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)  # population (ddof=0)
    for j in np.flatnonzero(~(sigma > 0)):
        label = names[j] if names is not None else f"#{j}"
        raise DataError(f"constant feature {label}")
    return NormParams(mu, sigma)


def _prepare(values, params: NormParams) -> tuple[np.ndarray, bool]:
    # 1-D input is a sample list when there is one feature, else one feature vector
    x = np.asarray(values, dtype=np.float64)
    squeeze = x.ndim == 1 and params.n_features == 1
    if squeeze:
        x = x[:, None]
    if x.shape[-1] != params.n_features:
        raise DataError(f"dimension mismatch: {x.shape[-1]} features, params have {params.n_features}")
    return x, squeeze


def zscore_apply(values, params: NormParams) -> np.ndarray:
    """``(x - mu) / sigma`` per feature."""
    x, squeeze = _prepare(values, params)
    out = (x - params.mu) / params.sigma
    return out[:, 0] if squeeze else out


def zscore_invert(values, params: NormParams) -> np.ndarray:
    x, squeeze = _prepare(values, params)
    out = x * params.sigma + params.mu
    return out[:, 0] if squeeze else out


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised windows cut from a feature matrix.

    ``inputs[i]`` covers rows ``starts[i] .. starts[i]+L-1`` and
    ``targets[i]`` is the target column at row ``target_index[i]``.
    """

    inputs: np.ndarray        # (W, L, F)
    targets: np.ndarray       # (W,)
    starts: np.ndarray        # (W,) first input row
    target_index: np.ndarray  # (W,) row of the target
    window_length: int
    horizon: int
    stride: int
    dates: np.ndarray | None = None

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def last_input_index(self) -> np.ndarray:
        return self.starts + self.window_length - 1

    @property
    def target_dates(self) -> np.ndarray | None:
        return None if self.dates is None else self.dates[self.target_index]

    @property
    def issue_dates(self) -> np.ndarray | None:
        return None if self.dates is None else self.dates[self.last_input_index]

    def subset(self, mask) -> "WindowedDataset":
        return WindowedDataset(
            self.inputs[mask], self.targets[mask], self.starts[mask], self.target_index[mask],
            self.window_length, self.horizon, self.stride, self.dates,
        )


def window_count(n: int, length: int, horizon: int = 1, stride: int = 1) -> int:
    if n < length + horizon:
        return 0
    return (n - length - horizon) // stride + 1


def make_windows(series, length: int, horizon: int = 1, stride: int = 1,
                 target_col: int = 0, dates=None) -> WindowedDataset:
    """Cut an ``(N, F)`` normalized matrix into overlapping windows.

    The target of a window is ``series[last + horizon, target_col]``.
    """
    x = _as_matrix(series)
    if min(length, horizon, stride) < 1:
        raise DataError("window length, horizon and stride must all be >= 1")
    n = x.shape[0]
    count = window_count(n, length, horizon, stride)
    if count == 0:
        raise DataError(f"series too short: {n} rows, need at least {length + horizon}")
    if not 0 <= target_col < x.shape[1]:
        raise DataError(f"target column {target_col} out of range")
    starts = np.arange(count) * stride
    idx = starts[:, None] + np.arange(length)[None, :]
    target_index = starts + length - 1 + horizon
    if dates is not None:
        dates = np.asarray(dates)
        if len(dates) != n:
            raise DataError("dates and series lengths differ")
    return WindowedDataset(
        inputs=x[idx],
        targets=x[target_index, target_col].copy(),
        starts=starts,
        target_index=target_index,
        window_length=length,
        horizon=horizon,
        stride=stride,
        dates=dates,
    )
