import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from hybridcast.convlstm import (
    CellState,
    ConvLstmParams,
    PredictionSeries,
    TrainConfig,
    cell_forward,
    forward,
    grad_check,
    load_model,
    loss_huber,
    loss_mse,
    model_bytes,
    predict_series,
    save_model,
    train,
)
from hybridcast.timeseries import OhlcvSeries, make_windows, zscore_apply, zscore_fit


def random_params(rng, n_features=3, hidden=2, filters=2, kernel_width=3, scale=1.0):
    p = ConvLstmParams.init(n_features, hidden, filters, kernel_width, rng=rng)
    for arr in p.arrays().values():
        arr[...] = rng.normal(0.0, scale, arr.shape)
    return p


def test_zero_params_from_zero_state():
    p = ConvLstmParams.zeros(3, hidden=4, filters=2)
    s = cell_forward([0.3, -1.0, 2.0], CellState.zeros(4), p)
    assert np.all(s.c == 0.0) and np.all(s.h == 0.0)


def test_zero_params_carry_half_the_cell():
    p = ConvLstmParams.zeros(2, hidden=3, filters=2)
    c0 = np.array([0.7, -2.0, 4.0])
    s = cell_forward([1.0, 1.0], CellState(np.zeros(3), c0), p)
    assert np.allclose(s.c, 0.5 * c0, rtol=0, atol=1e-15)
    assert np.allclose(s.h, 0.5 * np.tanh(0.5 * c0), rtol=0, atol=1e-15)


def test_cell_matches_scalar_oracle_k1():
    rng = np.random.default_rng(1)
    p = random_params(rng, n_features=3, hidden=2, filters=2, kernel_width=1)
    x, h, c = rng.normal(size=3), rng.normal(size=2) * 0.5, rng.normal(size=2)
    got = cell_forward(x, CellState(h, c), p)
    hh, cc = oracles.cell(x.tolist(), h.tolist(), c.tolist(), oracles.as_lists(p))
    assert np.allclose(got.h, hh, rtol=0, atol=1e-12)
    assert np.allclose(got.c, cc, rtol=0, atol=1e-12)


def test_forward_matches_chained_oracle():
    rng = np.random.default_rng(2)
    p = random_params(rng, n_features=2, hidden=2, filters=3, kernel_width=3, scale=0.5)
    window = rng.normal(size=(3, 2))
    assert forward(window, p) == pytest.approx(oracles.predict(window, oracles.as_lists(p)), abs=1e-12)
    # and against chaining the vectorized cell
    s = CellState.zeros(2)
    for row in window:
        s = cell_forward(row, s, p)
    assert forward(window, p) == pytest.approx(float(s.h @ p.w_out + p.b_out), abs=1e-14)


def test_forward_zero_params_and_determinism():
    assert forward(np.ones((4, 2)), ConvLstmParams.zeros(2)) == 0.0
    p = ConvLstmParams.init(2, rng=5)
    w = np.random.default_rng(0).normal(size=(6, 2))
    assert forward(w, p) == forward(w.copy(), p)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 20.0))
def test_gate_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    p = random_params(rng, n_features=3, hidden=4, filters=2, scale=scale)
    s = CellState(rng.uniform(-1, 1, 4), rng.normal(size=4) * scale)
    for _ in range(3):
        s = cell_forward(rng.normal(size=3) * scale, s, p)
        # tanh rounds to exactly 1.0 in float64 once its argument passes ~19
        bound_ok = np.abs(s.h) < 1.0 if scale <= 3.0 else np.abs(s.h) <= 1.0
        assert np.all(bound_ok)
        assert s.h.shape == s.c.shape


def test_shape_and_finiteness_errors():
    p = ConvLstmParams.zeros(2, hidden=3)
    with pytest.raises(ValueError):
        cell_forward([1.0, 2.0, 3.0], CellState.zeros(3), p)
    with pytest.raises(ValueError, match="non-finite"):
        cell_forward([1.0, np.nan], CellState.zeros(3), p)
    with pytest.raises(ValueError, match="odd"):
        ConvLstmParams(np.zeros((4, 2, 2)), np.zeros((4, 3, 4)), np.zeros((4, 3, 3)),
                       np.zeros((4, 3)), np.zeros(3), 0.0)


def test_loss_examples():
    assert loss_mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert loss_mse([0.0], [2.0]) == 4.0
    assert loss_mse([1.0, 3.0], [2.0, 5.0]) == 2.5
    assert loss_huber([1.0], [1.0]) == 0.0
    assert loss_huber([0.0, 0.0], [0.5, 3.0], 1.0) == 1.3125


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 10))
def test_huber_below_half_square(e, delta):
    h = loss_huber([e], [0.0], delta)
    assert 0.0 <= h <= 0.5 * e * e + 1e-12
    if abs(e) <= delta:
        assert h == pytest.approx(0.5 * e * e)
    else:
        assert h < 0.5 * e * e


@pytest.mark.parametrize("delta", [0.3, 1.0, 2.5])
def test_huber_continuous_at_knee(delta):
    at = loss_huber([delta], [0.0], delta)
    assert at == pytest.approx(0.5 * delta * delta, rel=1e-15)
    eps = 1e-9
    assert loss_huber([delta + eps], [0.0], delta) == pytest.approx(at, abs=1e-8)
    assert loss_huber([delta - eps], [0.0], delta) == pytest.approx(at, abs=1e-8)


def test_grad_check_zero_model():
    p = ConvLstmParams.zeros(2, hidden=3, filters=2)
    w = np.random.default_rng(0).normal(size=(4, 2))
    assert grad_check(p, w, 0.7, "mse") < 1e-4


@pytest.mark.parametrize("loss, target", [("huber", 0.3), ("huber", 4.0), ("mse", 1.5)])
def test_grad_check_random_model(loss, target):
    rng = np.random.default_rng(11)
    p = ConvLstmParams.init(3, hidden=4, filters=2, rng=rng)
    w = rng.normal(size=(5, 3))
    assert grad_check(p, w, target, loss) < 1e-4


def test_grad_check_with_skip():
    rng = np.random.default_rng(4)
    p = ConvLstmParams.init(2, hidden=3, filters=2, rng=rng)
    assert grad_check(p, rng.normal(size=(4, 2)), 0.2, "huber", skip=0) < 1e-4


def _dataset(n=60, f=2, length=5, seed=0):
    x = np.random.default_rng(seed).normal(size=(n, f))
    return make_windows(x, length), zscore_fit(x, names=("close", "volume"))


def test_zero_learning_rate_keeps_params():
    ds, norm = _dataset()
    init = ConvLstmParams.init(2, hidden=4, filters=2, rng=3)
    model, _ = train(ds, TrainConfig(learning_rate=0.0, epochs=3), norm=norm,
                     feature_columns=("close", "volume"), params=init, hidden=4, filters=2)
    for name, arr in init.arrays().items():
        assert np.array_equal(getattr(model.params, name), arr)


def test_single_window_overfits():
    ds, norm = _dataset()
    one = ds.subset(np.arange(len(ds)) == 0)
    _, hist = train(one, TrainConfig(epochs=200, learning_rate=1e-2), norm=norm,
                    feature_columns=("close", "volume"), hidden=4, filters=2)
    assert hist[-1] < hist[0]


def test_same_seed_same_history_and_params():
    ds, norm = _dataset()
    cfg = TrainConfig(epochs=5, batch_size=8, seed=9)
    kw = dict(norm=norm, feature_columns=("close", "volume"), hidden=4, filters=2)
    m1, h1 = train(ds, cfg, **kw)
    m2, h2 = train(ds, cfg, **kw)
    assert h1 == h2
    assert model_bytes(m1) == model_bytes(m2)


def _series(close):
    n = len(close)
    dates = np.datetime64("2024-01-01") + np.arange(n)
    close = np.asarray(close, dtype=np.float64)
    return OhlcvSeries(dates, close, close, close, close, close, np.full(n, 1000.0))


def _trained(series, length=4, epochs=3, features=("close",)):
    raw = series.features(features)
    norm = zscore_fit(raw, names=features)
    ds = make_windows(zscore_apply(raw, norm), length)
    return train(ds, TrainConfig(epochs=epochs), norm=norm, feature_columns=features,
                 hidden=4, filters=2)[0]


def test_predict_series_alignment():
    s = _series(100 + np.sin(np.arange(30.0)))
    model = _trained(s)
    preds = predict_series(model, s)
    assert len(preds) == 30 - 4
    # k-th forecast is dated at row L + k and issued at row L + k - 1
    assert np.array_equal(preds.dates, s.dates[4:])
    assert np.array_equal(preds.issue_dates, s.dates[3:-1])
    assert len(predict_series(model, s.slice(0, 5))) == 1


def test_constant_series_forecasts_the_constant():
    # constant data cannot be z-scored, so fit on a ramp and evaluate on a flat tail
    close = np.concatenate([np.linspace(90, 110, 40), np.full(20, 100.0)])
    s = _series(close)
    raw = s.features(("close",))
    norm = zscore_fit(raw, names=("close",))
    ds = make_windows(zscore_apply(raw, norm), 4)
    flat = ds.subset(ds.starts >= 40)
    model, _ = train(flat, TrainConfig(epochs=400, learning_rate=1e-2, loss="mse"), norm=norm,
                     feature_columns=("close",), hidden=4, filters=2)
    preds = predict_series(model, s.slice(40, 60))
    assert np.allclose(preds.values, 100.0, atol=0.05)


def test_sine_convergence():
    t = np.arange(200.0)
    x = np.sin(2 * np.pi * t / 25.0)[:, None]
    norm = zscore_fit(x, names=("close",))
    ds = make_windows(zscore_apply(x, norm), 10)
    _, hist = train(ds, TrainConfig(epochs=300, loss="mse"), norm=norm, feature_columns=("close",))
    assert hist[-1] < 1e-3


def test_checkpoint_round_trip(tmp_path):
    s = _series(100 + np.cumsum(np.random.default_rng(0).normal(size=40)))
    s = OhlcvSeries(s.dates, s.open, s.high, s.low, s.close, s.adj_close,
                    np.arange(1000.0, 1040.0))
    model = _trained(s, features=("close", "volume"))
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert model_bytes(back) == model_bytes(model)
    for name, arr in model.params.arrays().items():
        assert np.array_equal(getattr(back.params, name), arr)
    assert np.array_equal(predict_series(back, s).values, predict_series(model, s).values)
    with pytest.raises(ValueError):
        load_model(io.BytesIO(b"not a checkpoint"))


def test_prediction_csv_round_trip():
    s = _series(100 + np.sin(np.arange(12.0)))
    preds = predict_series(_trained(s), s)
    back = PredictionSeries.from_csv(preds.to_csv())
    assert np.array_equal(back.dates, preds.dates)
    assert np.allclose(back.values, preds.values, atol=5e-7)
