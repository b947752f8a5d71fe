"""Acceptance criteria, one test each.

Every criterion records a one-line verdict that is printed at the end of the
pytest run (see conftest.py).  Running this file directly prints the same
lines without pytest.
"""

import math
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
import oracles  # noqa: E402

from hybridcast import cli  # noqa: E402
from hybridcast.convlstm import CellState, ConvLstmParams, _forward_batch, cell_forward, grad_check  # noqa: E402
from hybridcast.fusion import parse_corpus, records_from_csv  # noqa: E402
from hybridcast.metrics import MetricReport, compare_report, compute_metrics  # noqa: E402
from hybridcast.pipeline import E2EConfig, run_e2e  # noqa: E402
from hybridcast.seqlen import SearchConfig, search_optimal_length  # noqa: E402
from hybridcast.sentiment import weighted_cumulative  # noqa: E402
from hybridcast.synth import SynthConfig  # noqa: E402
from hybridcast.timeseries import zscore_apply, zscore_fit, zscore_invert  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
RESULTS: dict[int, str] = {}
E2E_SEEDS = range(10)


def record(number, name, ok, detail):
    RESULTS[number] = f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}"
    return ok


# --- criterion bodies (return numbers so determinism can compare them) ------

def gradient_errors(n_configs=20):
    errors = []
    for seed in range(n_configs):
        rng = np.random.default_rng(1000 + seed)
        n_features = int(rng.integers(1, 4))
        hidden = int(rng.integers(2, 5))
        filters = int(rng.integers(1, 4))
        kernel_width = int(rng.choice([1, 3, 5]))
        length = int(rng.integers(2, 6))
        skip = 0 if seed % 4 == 3 else None
        params = ConvLstmParams.init(n_features, hidden, filters, kernel_width, rng=rng)
        params.b_out[...] = rng.normal()
        window = rng.normal(size=(length, n_features))
        pred = float(_forward_batch(window[None], params, skip=skip)[0][0])
        for loss in ("huber", "mse"):
            # alternate the Huber residual between the quadratic and linear branches
            offset = 0.4 if seed % 2 else 2.5
            target = pred + offset * (1 if rng.random() < 0.5 else -1)
            assert abs(abs(target - pred) - 1.0) > 1e-6  # away from the knee
            errors.append(grad_check(params, window, target, loss, 1.0, skip=skip))
    return errors


def test_1_gradient_correctness():
    t0 = time.perf_counter()
    errors = gradient_errors()
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    ok = worst < 1e-4 and elapsed < 30
    record(1, "gradient check", ok,
           f"max rel err {worst:.2e} over {len(errors)} checks (20 configs x 2 losses), {elapsed:.1f}s")
    assert ok


def test_2_cell_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(100):
        rng = np.random.default_rng(2000 + case)
        n_features = int(rng.integers(1, 5))
        hidden = int(rng.integers(1, 5))
        filters = int(rng.integers(1, 4))
        kernel_width = int(rng.choice([1, 3, 5]))
        params = ConvLstmParams.init(n_features, hidden, filters, kernel_width, rng=rng)
        for arr in params.arrays().values():
            arr[...] = rng.normal(0.0, 1.0, arr.shape)
        x = rng.normal(size=n_features)
        h = rng.uniform(-1, 1, hidden)
        c = rng.normal(size=hidden)
        got = cell_forward(x, CellState(h, c), params)
        hh, cc = oracles.cell(x.tolist(), h.tolist(), c.tolist(), oracles.as_lists(params))
        worst = max(worst, float(np.max(np.abs(got.h - hh))), float(np.max(np.abs(got.c - cc))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5
    record(2, "cell equation oracle", ok, f"max abs diff {worst:.1e} on 100 cases, {elapsed:.2f}s")
    assert ok


def test_3_normalization():
    rng = np.random.default_rng(3)
    worst_trip = worst_mean = worst_std = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 200))
        f = int(rng.integers(1, 4))
        x = rng.normal(rng.uniform(-1e3, 1e3, f), rng.uniform(0.01, 100, f), size=(n, f))
        p = zscore_fit(x)
        z = zscore_apply(x, p)
        worst_trip = max(worst_trip, float(np.max(np.abs(zscore_invert(z, p) - x))))
        worst_mean = max(worst_mean, float(np.max(np.abs(z.mean(axis=0)))))
        worst_std = max(worst_std, float(np.max(np.abs(z.std(axis=0) - 1.0))))
    ok = worst_trip < 1e-9 and worst_mean <= 1e-9 and worst_std <= 1e-9
    record(3, "normalization", ok,
           f"round trip {worst_trip:.1e}, |mean| {worst_mean:.1e}, |std-1| {worst_std:.1e} on 100 series")
    assert ok


def seqlen_runs():
    out = []
    for k in range(20):
        rng = np.random.default_rng(4000 + k)
        peak = int(rng.integers(2, 65))
        rise = np.cumsum(rng.integers(1, 30, 64))
        curve = {L: -int(rise[abs(L - peak)]) if L != peak else 0 for L in range(2, 65)}
        cfg = SearchConfig(initial_length=int(rng.integers(2, 65)), initial_step=int(rng.integers(1, 17)))
        best, trace = search_optimal_length(curve.__getitem__, cfg)
        final_step = trace.entries[-1].step / cfg.alpha  # step in force when the search stopped
        truth = oracles.brute_argmax(curve.__getitem__, 2, 64)
        out.append((best, truth, final_step, trace.n_evaluations))
    return out


def test_4_seqlen_search():
    runs = seqlen_runs()
    misses = sum(abs(b - t) > s for b, t, s, _ in runs)
    max_evals = max(n for *_, n in runs)
    exact = sum(b == t for b, t, _, _ in runs)
    ok = misses == 0 and max_evals <= 100
    record(4, "window-length search", ok,
           f"{20 - misses}/20 within final step ({exact} exact), max {max_evals} evaluations")
    assert ok


def test_5_sentiment_aggregation():
    rng = random.Random(5)
    failures = 0
    worst_scale = 0.0
    for _ in range(1000):
        n = rng.randint(1, 40)
        pairs = [(rng.uniform(1e-3, 1.0), rng.uniform(-1.0, 1.0)) for _ in range(n)]
        w = weighted_cumulative(pairs)
        xs = [x for _, x in pairs]
        shuffled = pairs[:]
        rng.shuffle(shuffled)
        k = rng.uniform(1e-3, 1e3)
        scaled = weighted_cumulative([(k * a, x) for a, x in pairs])
        worst_scale = max(worst_scale, abs(scaled - w))
        if not (min(xs) <= w <= max(xs)) or weighted_cumulative(shuffled) != w or abs(scaled - w) > 1e-12:
            failures += 1
    hand = (weighted_cumulative([(1.0, 0.5), (1.0, -0.5)]) == 0.0
            and weighted_cumulative([(2.0, 0.9), (1.0, -0.3)]) == 0.5)
    ok = failures == 0 and hand
    record(5, "W_cs aggregation", ok,
           f"{1000 - failures}/1000 fixtures hold, scale drift {worst_scale:.1e}, hand examples "
           f"{'exact' if hand else 'WRONG'}")
    assert ok


def test_6_corpus_format(tmp_path, capsys):
    code = cli.main(["emit-corpus", "--records", str(FIXTURES / "records3.csv"), "--out-dir", str(tmp_path)])
    capsys.readouterr()
    produced = (tmp_path / "corpus.jsonl").read_bytes()
    golden = (FIXTURES / "golden_corpus.jsonl").read_bytes()
    records = records_from_csv((FIXTURES / "records3.csv").read_text())
    back = parse_corpus(produced.decode())
    recovered = all(
        round(r.lstm_prediction, 4) == p and round(r.w_cs, 4) == s and round(r.actual, 4) == v
        for r, (p, s, v) in zip(records, back)) and len(back) == len(records)
    ok = code == 0 and produced == golden and recovered
    record(6, "corpus format", ok,
           f"golden {'identical' if produced == golden else 'DIFFERS'}, parse-back "
           f"{'exact at 4 dp' if recovered else 'MISMATCH'}")
    assert ok


def test_7_metric_identities():
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 100))
        y = rng.uniform(1, 1e3, n)
        r = compute_metrics(y, y + rng.normal(0, rng.uniform(0.01, 50), n))
        if not (math.isclose(r.rmse ** 2, r.mse, rel_tol=1e-9) and r.mae <= r.rmse):
            bad += 1

    def rep(mae):
        return MetricReport(mae, mae ** 2, mae, 1.0, 1)

    table = compare_report(rep(3.258327), rep(1.605440))
    mae_line = next(line for line in table.splitlines() if line.startswith("Mean Absolute Error"))
    shown = mae_line.split()[-1]
    ok = bad == 0 and shown == "50.73%"
    record(7, "metric identities", ok, f"{100 - bad}/100 pairs hold, reference MAE pair 3.258327 vs 1.605440 shows {shown}")
    assert ok


def e2e_reductions():
    out = []
    for seed in E2E_SEEDS:
        cfg = E2EConfig(synth=SynthConfig(days=500, jump_probability=0.08, seed=seed))
        result = run_e2e(cfg)
        out.append((round(result.baseline.mae, 12), round(result.hybrid.mae, 12), result.mae_reduction))
    return out


_E2E_CACHE = {}


def test_8_end_to_end():
    t0 = time.perf_counter()
    runs = e2e_reductions()
    elapsed = time.perf_counter() - t0
    _E2E_CACHE["first"] = runs
    wins = sum(r >= 25.0 for *_, r in runs)
    ok = wins >= 8 and elapsed < 300
    detail = ", ".join(f"{r:.1f}" for *_, r in runs)
    record(8, "end-to-end hybrid vs baseline", ok,
           f"{wins}/10 seeds with MAE reduction >= 25% ({detail}), {elapsed:.0f}s")
    assert ok


def test_9_determinism():
    grads = gradient_errors(), gradient_errors()
    search = seqlen_runs(), seqlen_runs()
    first = _E2E_CACHE.get("first") or e2e_reductions()
    e2e = first, e2e_reductions()
    same = {"gradient": grads[0] == grads[1], "search": search[0] == search[1], "e2e": e2e[0] == e2e[1]}
    ok = all(same.values())
    record(9, "determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
