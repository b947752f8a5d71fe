"""End-to-end run: synthetic data -> Conv-LSTM baseline -> sentiment fusion -> evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convlstm, fusion, metrics, news, sentiment, synth
from .timeseries import DEFAULT_FEATURES, load_ohlcv, make_windows, zscore_apply, zscore_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    window_length: int = 10
    hidden: int = 16
    filters: int = 8
    kernel_width: int = 3
    features: tuple[str, ...] = ("close",)
    target: str = "close"
    residual: bool = True


@dataclass(frozen=True)
class E2EConfig:
    synth: synth.SynthConfig = field(default_factory=synth.SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: convlstm.TrainConfig = field(
        default_factory=lambda: convlstm.TrainConfig(learning_rate=3e-3, epochs=60, batch_size=32))
    train_fraction: float = 0.8
    test_fraction: float = 0.2
    granularity: str = "day"
    align: str = "issue"


@dataclass
class E2EResult:
    baseline: metrics.MetricReport
    hybrid: metrics.MetricReport
    surrogate: fusion.SurrogateModel
    records: list[fusion.FusionRecord]
    n_test: int
    loss_history: list[float]
    model: convlstm.ConvLstmModel
    data: synth.SynthData

    @property
    def mae_reduction(self) -> float:
        return metrics.improvement(self.baseline.mae, self.hybrid.mae)

    def table(self, fmt: str = "text") -> str:
        return metrics.compare_report(self.baseline, self.hybrid, fmt)


def train_baseline(series, mcfg: ModelConfig, tcfg: convlstm.TrainConfig, train_fraction: float = 0.8,
                   on_epoch=None):
    """Fit normalization and the Conv-LSTM on the first ``train_fraction`` of rows."""
    n_train = int(len(series) * train_fraction)
    raw = series.features(mcfg.features)
    norm = zscore_fit(raw[:n_train], names=mcfg.features)
    ds = make_windows(zscore_apply(raw, norm), mcfg.window_length,
                      target_col=mcfg.features.index(mcfg.target), dates=series.dates)
    ds = ds.subset(ds.target_index < n_train)
    return convlstm.train(ds, tcfg, norm=norm, feature_columns=mcfg.features, target_column=mcfg.target,
                          hidden=mcfg.hidden, filters=mcfg.filters, kernel_width=mcfg.kernel_width,
                          residual=mcfg.residual, on_epoch=on_epoch)


def split_records(records, test_fraction: float):
    n_test = max(1, int(round(len(records) * test_fraction)))
    return records[:-n_test], records[-n_test:]


def run_e2e(config: E2EConfig = E2EConfig(), out_dir: str | Path | None = None) -> E2EResult:
    data = synth.generate(config.synth)
    series = load_ohlcv(data.series.to_csv())
    model, history = train_baseline(series, config.model, config.train, config.train_fraction,
                                    on_epoch=lambda e, l: log.info("epoch %d loss %.6f", e, l))
    preds = convlstm.predict_series(model, series)

    feed = news.parse_feed(data.feed_json)
    scored = sentiment.score_articles(feed.articles, news.default_registry())
    intervals = sentiment.bucket_by_interval(scored, config.granularity)
    records = fusion.time_map(preds, intervals, series, align=config.align)

    fit_part, test_part = split_records(records, config.test_fraction)
    surrogate = fusion.fit_surrogate(fit_part)
    actual = np.array([r.actual for r in test_part])
    lstm = np.array([r.lstm_prediction for r in test_part])
    fused = surrogate.predict(lstm, [r.w_cs for r in test_part])
    result = E2EResult(metrics.compute_metrics(actual, lstm), metrics.compute_metrics(actual, fused),
                       surrogate, records, len(test_part), history, model, data)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stock.csv").write_text(series.to_csv())
        (out / "feed.json").write_text(data.feed_json)
        (out / "events.csv").write_text(data.events_csv())
        (out / "predictions.csv").write_text(preds.to_csv())
        (out / "scored.csv").write_text(sentiment.scored_to_csv(scored))
        (out / "intervals.csv").write_text(sentiment.intervals_to_csv(intervals))
        (out / "records.csv").write_text(fusion.records_to_csv(records))
        (out / "corpus.jsonl").write_text(fusion.emit_corpus(records))
        (out / "surrogate.json").write_text(surrogate.to_json())
        (out / "comparison.txt").write_text(result.table())
        convlstm.save_model(model, out / "model.npz")
    return result
