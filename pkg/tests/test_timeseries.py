import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridcast.timeseries import (
    DataError,
    load_ohlcv,
    make_windows,
    window_count,
    zscore_apply,
    zscore_fit,
    zscore_invert,
)

HEADER = "date,open,high,low,close,adj_close,volume\n"
ROWS = [
    "2024-01-02,10,11,9,10.5,10.5,1000",
    "2024-01-03,10.5,12,10,11.5,11.5,1500",
    "2024-01-04,11.5,12,11,11.75,11.75,1200",
]


def test_load_two_rows():
    s = load_ohlcv(HEADER + "\n".join(ROWS[:2]) + "\n")
    assert len(s) == 2
    assert s.dates[1] == np.datetime64("2024-01-03")
    assert s.close.tolist() == [10.5, 11.5]
    assert s.volume.tolist() == [1000, 1500]


def test_header_only_is_rejected():
    with pytest.raises(DataError, match="no data rows"):
        load_ohlcv(HEADER)


def test_unsorted_rows_come_back_sorted():
    shuffled = [ROWS[2], ROWS[0], ROWS[1]]
    s = load_ohlcv(HEADER + "\n".join(shuffled))
    # oracle: sort the raw rows by their date string
    expected = sorted(shuffled, key=lambda r: r.split(",")[0])
    assert [str(d) for d in s.dates] == [r.split(",")[0] for r in expected]
    assert s.close.tolist() == [float(r.split(",")[4]) for r in expected]


@pytest.mark.parametrize("bad, msg", [
    (ROWS[0] + "\n" + ROWS[0], "duplicate"),
    ("2024-01-02,10,11,9,-1,10,5", "positive"),
    ("2024-01-02,10,11,9,x,10,5", "line 2"),
])
def test_bad_rows(bad, msg):
    with pytest.raises(DataError, match=msg):
        load_ohlcv(HEADER + bad)


def test_csv_round_trip():
    s = load_ohlcv(HEADER + "\n".join(ROWS))
    again = load_ohlcv(s.to_csv())
    for col in ("open", "high", "low", "close", "adj_close", "volume"):
        assert np.array_equal(again.column(col), s.column(col))


def test_zscore_hand_values():
    p = zscore_fit([1.0, 2.0, 3.0])
    assert p.mu[0] == pytest.approx(2.0)
    assert p.sigma[0] == pytest.approx(np.sqrt(2.0 / 3.0), rel=1e-15)
    assert zscore_fit([-1.0, 1.0]).mu[0] == 0.0


def test_zscore_constant_feature():
    with pytest.raises(DataError, match="constant feature"):
        zscore_fit([5.0, 5.0, 5.0])


def test_zscore_apply_and_invert_points():
    p = zscore_fit([1.0, 2.0, 3.0])
    mu, sigma = p.mu[0], p.sigma[0]
    assert zscore_apply([mu, mu + sigma], p) == pytest.approx([0.0, 1.0])
    assert zscore_invert([0.0, 1.0], p) == pytest.approx([mu, mu + sigma])
    z = zscore_apply([1.0, 2.0, 3.0], p)
    assert abs(z.mean()) < 1e-12 and abs(z.std() - 1.0) < 1e-12


def test_zscore_matrix_is_per_column():
    x = np.array([[1.0, 100.0], [3.0, 300.0], [5.0, 200.0]])
    p = zscore_fit(x, names=("a", "b"))
    z = zscore_apply(x, p)
    assert np.allclose(z.mean(axis=0), 0.0) and np.allclose(z.std(axis=0), 1.0)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=finite))
def test_zscore_round_trip_property(x):
    if np.ptp(x) < 1e-3:
        return
    p = zscore_fit(x)
    back = zscore_invert(zscore_apply(x, p), p)
    assert np.allclose(back, x, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(x).max()))


def test_window_examples():
    x = np.arange(10.0)[:, None]
    assert len(make_windows(x, 5)) == 5
    assert len(make_windows(np.arange(6.0)[:, None], 5)) == 1
    with pytest.raises(DataError, match="series too short"):
        make_windows(np.arange(5.0)[:, None], 5)


def test_window_contents():
    x = np.arange(10.0)[:, None]
    ds = make_windows(x, 3, horizon=2, stride=3)
    # starts 0, 3; last input 2, 5; targets at 4, 7
    assert ds.starts.tolist() == [0, 3]
    assert ds.targets.tolist() == [4.0, 7.0]
    assert ds.inputs[1, :, 0].tolist() == [3.0, 4.0, 5.0]


def test_window_count_sweep():
    for n in range(1, 51):
        for length in range(1, 11):
            for horizon in (1, 2, 3):
                for stride in (1, 2, 4):
                    # oracle: enumerate start indices directly
                    brute = sum(1 for s in range(0, n, stride) if s + length + horizon - 1 < n)
                    if brute == 0:
                        with pytest.raises(DataError):
                            make_windows(np.arange(float(n))[:, None], length, horizon, stride)
                        continue
                    assert window_count(n, length, horizon, stride) == brute
                    assert len(make_windows(np.arange(float(n))[:, None], length, horizon, stride)) == brute


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 60), st.integers(1, 10), st.integers(1, 3), st.integers(1, 4))
def test_windows_never_leak_targets(n, length, horizon, stride):
    if n < length + horizon:
        return
    dates = np.datetime64("2024-01-01") + np.arange(n)
    ds = make_windows(np.arange(float(n))[:, None], length, horizon, stride, dates=dates)
    assert np.all(ds.last_input_index < ds.target_index)
    assert np.all(ds.issue_dates < ds.target_dates)
    assert np.all(ds.inputs[:, :, 0].max(axis=1) < ds.targets)
