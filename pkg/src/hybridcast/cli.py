"""Command-line front end.

Every subcommand wraps one pipeline stage.  Settings come from an optional
``key = value`` config file (``--config``, sections per stage) and are
overridden by flags.  Files are only written below ``--out-dir``; progress
goes to stderr.  Exit status: 0 ok, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import convlstm, fusion, metrics, news, pipeline, seqlen, sentiment, synth
from .timeseries import DataError, load_ohlcv, zscore_fit

log = logging.getLogger("hybridcast")

USAGE_ERROR = 1
DATA_ERROR = 2

# config-file keys, by section, with the type used to parse them
CONFIG_KEYS = {
    "paths": {"stock": str, "feed": str, "weights": str, "lexicon": str, "out_dir": str},
    "model": {"window_length": int, "hidden": int, "filters": int, "kernel_width": int,
              "features": str, "target": str, "residual": bool},
    "train": {"learning_rate": float, "epochs": int, "batch_size": int, "loss": str,
              "huber_delta": float, "clip_norm": float},
    "search": {"initial_length": int, "initial_step": float, "eta": float, "alpha": float,
               "min_step": float, "min_length": int, "max_length": int, "max_iterations": int},
    "sentiment": {"granularity": str},
    "run": {"seed": int},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path: str | None) -> dict:
    """Flatten a config file into ``{key: value}``; unknown keys are usage errors."""
    if path is None:
        return {}
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not cp.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for section in cp.sections():
        if section not in CONFIG_KEYS:
            raise UsageError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            kind = CONFIG_KEYS[section].get(key)
            if kind is None:
                raise UsageError(f"unknown config key {section}.{key}")
            try:
                out[key] = _bool(raw) if kind is bool else kind(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {section}.{key}: {exc}") from None
    return out


def _opt(args, cfg: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _require(args, cfg, key):
    value = _opt(args, cfg, key)
    if value is None:
        raise UsageError(f"--{key.replace('_', '-')} is required (flag or config file)")
    return value


def _out(args, cfg, name: str) -> Path:
    out_dir = Path(_opt(args, cfg, "out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def _emit(args, cfg, text: str, default_name: str):
    """Write ``text`` to ``--output`` below the out dir, or stdout for ``-``."""
    name = args.output or default_name
    if name == "-":
        sys.stdout.write(text)
        return
    if Path(name).is_absolute() or ".." in Path(name).parts:
        raise UsageError("--output must be a plain name inside --out-dir")
    path = _out(args, cfg, name)
    path.write_bytes(text.encode("utf-8"))
    print(path)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _features(args, cfg) -> tuple[str, ...]:
    raw = _opt(args, cfg, "features", "close,volume")
    return tuple(f.strip() for f in raw.split(",") if f.strip())


def _train_config(args, cfg) -> convlstm.TrainConfig:
    base = convlstm.TrainConfig()
    return convlstm.TrainConfig(
        learning_rate=_opt(args, cfg, "learning_rate", base.learning_rate),
        epochs=_opt(args, cfg, "epochs", base.epochs),
        batch_size=_opt(args, cfg, "batch_size", base.batch_size),
        loss=_opt(args, cfg, "loss", base.loss),
        huber_delta=_opt(args, cfg, "huber_delta", base.huber_delta),
        clip_norm=_opt(args, cfg, "clip_norm", base.clip_norm),
        seed=_opt(args, cfg, "seed", base.seed),
    )


def _progress(epoch, loss):
    log.info("epoch %d loss %.6g", epoch, loss)


# --- subcommands -----------------------------------------------------------

def cmd_ingest(args, cfg):
    series = load_ohlcv(_read(_require(args, cfg, "stock")))
    cols = _features(args, cfg)
    norm = zscore_fit(series.features(cols), names=cols)
    summary = {
        "rows": len(series),
        "first": str(series.dates[0]),
        "last": str(series.dates[-1]),
        "features": {c: {"mu": float(norm.mu[j]), "sigma": float(norm.sigma[j])} for j, c in enumerate(cols)},
    }
    print(json.dumps(summary, indent=2))


def cmd_find_seqlen(args, cfg):
    series = load_ohlcv(_read(_require(args, cfg, "stock")))
    cols = _features(args, cfg)
    target = _opt(args, cfg, "target", "close")
    base = seqlen.SearchConfig()
    scfg = seqlen.SearchConfig(**{k: _opt(args, cfg, k, getattr(base, k)) for k in CONFIG_KEYS["search"]})
    tcfg = _train_config(args, cfg)
    evaluate = seqlen.validation_evaluator(series.features(cols), cols.index(target), config=tcfg,
                                           columns=cols)

    def logged(length):
        perf = evaluate(length)
        log.info("L=%d perf=%.6g", length, perf)
        return perf

    best, trace = seqlen.search_optimal_length(logged, scfg)
    _emit(args, cfg, trace.to_csv(), "seqlen_trace.csv")
    print(f"optimal window length: {best}")


def cmd_train(args, cfg):
    series = load_ohlcv(_read(_require(args, cfg, "stock")))
    mcfg = pipeline.ModelConfig(
        window_length=_opt(args, cfg, "window_length", 10),
        hidden=_opt(args, cfg, "hidden", 16),
        filters=_opt(args, cfg, "filters", 8),
        kernel_width=_opt(args, cfg, "kernel_width", 3),
        features=_features(args, cfg),
        target=_opt(args, cfg, "target", "close"),
        residual=bool(_opt(args, cfg, "residual", False)),
    )
    model, history = pipeline.train_baseline(series, mcfg, _train_config(args, cfg),
                                             args.train_fraction, on_epoch=_progress)
    path = _out(args, cfg, args.output or "model.npz")
    convlstm.save_model(model, path)
    hist = "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(history, start=1))
    _out(args, cfg, "loss_history.csv").write_text(hist)
    print(path)


def cmd_predict(args, cfg):
    model = convlstm.load_model(args.model)
    series = load_ohlcv(_read(_require(args, cfg, "stock")))
    _emit(args, cfg, convlstm.predict_series(model, series).to_csv(), "predictions.csv")


def _scorer(args, cfg):
    if args.scorer_cmd:
        return sentiment.SubprocessScorer(args.scorer_cmd.split())
    lexicon = _opt(args, cfg, "lexicon")
    return sentiment.LexiconScorer.from_text(_read(lexicon)) if lexicon else sentiment.LexiconScorer.default()


def cmd_score_news(args, cfg):
    if args.fetch_url:
        feed = news.fetch_feed(args.fetch_url, {"q": args.query} if args.query else None)
    else:
        feed = news.parse_feed(Path(_require(args, cfg, "feed")).read_bytes())
    if feed.skipped:
        log.warning("skipped %d malformed articles", feed.skipped)
    weights = _opt(args, cfg, "weights")
    registry = news.SourceWeightRegistry.from_text(_read(weights)) if weights else news.default_registry()
    scorer = _scorer(args, cfg)
    try:
        scored = sentiment.score_articles(feed.articles, registry, scorer)
    finally:
        if isinstance(scorer, sentiment.SubprocessScorer):
            scorer.close()
    intervals = sentiment.bucket_by_interval(scored, _opt(args, cfg, "granularity", "day"))
    _out(args, cfg, "scored.csv").write_text(sentiment.scored_to_csv(scored))
    _emit(args, cfg, sentiment.intervals_to_csv(intervals), "intervals.csv")


def cmd_fuse(args, cfg):
    preds = convlstm.PredictionSeries.from_csv(_read(args.predictions))
    intervals = sentiment.intervals_from_csv(_read(args.intervals))
    stock = _opt(args, cfg, "stock")
    actuals = load_ohlcv(_read(stock)) if stock else None
    records = fusion.time_map(preds, intervals, actuals, align=args.align)
    _emit(args, cfg, fusion.records_to_csv(records), "records.csv")


def cmd_emit_corpus(args, cfg):
    records = fusion.records_from_csv(_read(args.records))
    _emit(args, cfg, fusion.emit_corpus(records), "corpus.jsonl")


def cmd_fit_surrogate(args, cfg):
    records = fusion.records_from_csv(_read(args.records))
    if args.test_fraction > 0:
        # hold out the same tail that `evaluate --records` scores
        records, _ = pipeline.split_records(records, args.test_fraction)
    _emit(args, cfg, fusion.fit_surrogate(records).to_json(), "surrogate.json")


def _values(path: str) -> np.ndarray:
    """Last column of a headed CSV as floats."""
    lines = [ln for ln in _read(path).splitlines() if ln.strip()]
    try:
        return np.array([float(ln.rsplit(",", 1)[-1]) for ln in lines[1:]])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_evaluate(args, cfg):
    fmt = args.format
    if args.records:
        records = fusion.records_from_csv(_read(args.records))
        if args.surrogate is None:
            raise UsageError("--records needs --surrogate")
        model = fusion.SurrogateModel.from_json(_read(args.surrogate))
        _, test = pipeline.split_records(records, args.test_fraction)
        if any(r.actual is None for r in test):
            raise DataError("records without actual values cannot be evaluated")
        actual = [r.actual for r in test]
        base = metrics.compute_metrics(actual, [r.lstm_prediction for r in test])
        hyb = metrics.compute_metrics(actual, model.predict([r.lstm_prediction for r in test],
                                                             [r.w_cs for r in test]))
        sys.stdout.write(metrics.compare_report(base, hyb, fmt))
        return
    if not (args.actual and args.predicted):
        raise UsageError("evaluate needs --actual and --predicted, or --records and --surrogate")
    actual = _values(args.actual)
    base = metrics.compute_metrics(actual, _values(args.predicted))
    if args.hybrid:
        sys.stdout.write(metrics.compare_report(base, metrics.compute_metrics(actual, _values(args.hybrid)), fmt))
        return
    if fmt == "csv":
        sys.stdout.write("metric,value\n" + "".join(f"{k},{getattr(base, k):.6f}\n" for k, _ in metrics.ROWS))
    else:
        sys.stdout.write("".join(f"{label:<40}{getattr(base, k):.6f}\n" for k, label in metrics.ROWS))


def _synth_config(args, cfg) -> synth.SynthConfig:
    base = synth.SynthConfig()
    return synth.SynthConfig(
        days=args.days if args.days is not None else base.days,
        jump_probability=args.jump_prob if args.jump_prob is not None else base.jump_probability,
        jump_magnitude=args.jump_magnitude if args.jump_magnitude is not None else base.jump_magnitude,
        volatility=args.volatility if args.volatility is not None else base.volatility,
        seed=_opt(args, cfg, "seed", base.seed),
    )


def cmd_synth(args, cfg):
    data = synth.generate(_synth_config(args, cfg))
    for name, text in (("stock.csv", data.series.to_csv()), ("feed.json", data.feed_json),
                       ("events.csv", data.events_csv()), ("weights.tsv", news.default_registry().to_text())):
        path = _out(args, cfg, name)
        path.write_text(text)
        print(path)


def cmd_e2e(args, cfg):
    seed = _opt(args, cfg, "seed", 0)
    base = pipeline.E2EConfig()
    ecfg = dataclasses.replace(base, synth=_synth_config(args, cfg),
                               train=dataclasses.replace(base.train, seed=seed),
                               granularity=_opt(args, cfg, "granularity", "day"))
    out_dir = _opt(args, cfg, "out_dir")
    result = pipeline.run_e2e(ecfg, out_dir)
    sys.stdout.write(result.table(args.format))


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file with [paths], [model], ... sections")
    common.add_argument("--out-dir", dest="out_dir", help="directory for all written files")
    common.add_argument("--output", "-o", help="output file name inside --out-dir, or - for stdout")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--stock", help="OHLCV CSV file")
    model.add_argument("--features", help="comma-separated feature columns (default close,volume)")
    model.add_argument("--target", help="target column (default close)")
    model.add_argument("--window-length", dest="window_length", type=int)
    model.add_argument("--hidden", type=int)
    model.add_argument("--filters", type=int)
    model.add_argument("--kernel-width", dest="kernel_width", type=int)
    model.add_argument("--residual", action="store_const", const=True,
                       help="predict the change from the last observed value")
    model.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    model.add_argument("--epochs", type=int)
    model.add_argument("--batch-size", dest="batch_size", type=int)
    model.add_argument("--loss", choices=("huber", "mse"))
    model.add_argument("--huber-delta", dest="huber_delta", type=float)
    model.add_argument("--clip-norm", dest="clip_norm", type=float)
    model.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.8)

    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--days", type=int)
    gen.add_argument("--jump-prob", dest="jump_prob", type=float)
    gen.add_argument("--jump-magnitude", dest="jump_magnitude", type=float)
    gen.add_argument("--volatility", type=float)

    parser = _Parser(prog="hybridcast", description="Conv-LSTM price forecasts fused with news sentiment.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ingest", parents=[common, model], help="validate a stock CSV and summarize it")
    p = sub.add_parser("find-seqlen", parents=[common, model], help="search the window length")
    for key, kind in CONFIG_KEYS["search"].items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)
    sub.add_parser("train", parents=[common, model], help="train the Conv-LSTM baseline")
    p = sub.add_parser("predict", parents=[common, model], help="forecast with a trained model")
    p.add_argument("--model", required=True)
    p = sub.add_parser("score-news", parents=[common], help="score a news feed into sentiment intervals")
    p.add_argument("--feed")
    p.add_argument("--weights")
    p.add_argument("--lexicon")
    p.add_argument("--granularity", choices=("day", "hour"))
    p.add_argument("--scorer-cmd", dest="scorer_cmd", help="external scorer process (tag<TAB>confidence)")
    p.add_argument("--fetch-url", dest="fetch_url", help="fetch the feed live (key from $NEWS_API_KEY)")
    p.add_argument("--query")
    p = sub.add_parser("fuse", parents=[common], help="time-map predictions onto sentiment intervals")
    p.add_argument("--predictions", required=True)
    p.add_argument("--intervals", required=True)
    p.add_argument("--stock")
    p.add_argument("--align", choices=("target", "issue"), default="target")
    p = sub.add_parser("emit-corpus", parents=[common], help="write the JSONL fine-tuning corpus")
    p.add_argument("--records", required=True)
    p = sub.add_parser("fit-surrogate", parents=[common], help="fit the linear fusion model")
    p.add_argument("--records", required=True)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2,
                   help="trailing share of records left out of the fit (0 fits all)")
    p = sub.add_parser("evaluate", parents=[common], help="error metrics and baseline/hybrid table")
    p.add_argument("--actual")
    p.add_argument("--predicted")
    p.add_argument("--hybrid")
    p.add_argument("--records")
    p.add_argument("--surrogate")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    sub.add_parser("synth", parents=[common, gen], help="generate synthetic prices and news")
    p = sub.add_parser("e2e", parents=[common, gen], help="full pipeline on synthetic data")
    p.add_argument("--granularity", choices=("day",))
    return parser


COMMANDS = {
    "ingest": cmd_ingest, "find-seqlen": cmd_find_seqlen, "train": cmd_train, "predict": cmd_predict,
    "score-news": cmd_score_news, "fuse": cmd_fuse, "emit-corpus": cmd_emit_corpus,
    "fit-surrogate": cmd_fit_surrogate, "evaluate": cmd_evaluate, "synth": cmd_synth, "e2e": cmd_e2e,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"hybridcast {args.command}: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, OSError, KeyError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"hybridcast {args.command}: error: {exc}", file=sys.stderr)
        return DATA_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
