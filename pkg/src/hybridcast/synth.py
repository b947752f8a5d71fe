"""Seeded synthetic prices with a news feed that foreshadows price jumps.

Closes follow a geometric random walk.  On an event day every article
carries the event's polarity, and the close moves by the jump magnitude on
the next trading day, so sentiment holds information the price history
does not.  Other days get mostly neutral filler copy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .timeseries import OhlcvSeries

SOURCES = (
    "Reuters", "Bloomberg", "The Wall Street Journal", "Financial Times", "CNBC",
    "MarketWatch", "Yahoo Finance", "Seeking Alpha", "Benzinga", "Daily Ticker Blog",
)

POSITIVE_WORDS = ("surge", "rally", "record", "profit", "growth", "upgrade", "beat", "strong",
                  "boost", "optimism", "breakthrough", "outperform", "robust", "rebound")
NEGATIVE_WORDS = ("plunge", "slump", "loss", "downgrade", "lawsuit", "fraud", "recall", "layoffs",
                  "warning", "weak", "miss", "probe", "shortfall", "slowdown")

EVENT_TEMPLATES = (
    "{co} shares in focus after {w1} report. Analysts cite {w2} and expect {w3} in coming sessions.",
    "{co} update: {w1} headlines dominate. Sources point to {w2} at the company.",
    "Investors react to {w1} news from {co}. Observers flag {w2} and {w3}.",
)
FILLER_TEMPLATES = (
    "{co} scheduled its annual shareholder meeting for next month.",
    "{co} shares traded in line with the sector today.",
    "{co} published a routine regulatory filing this morning.",
    "Analysts maintain their view on {co} ahead of the quarterly call.",
    "{co} executives will speak at an industry conference next week.",
)
MIXED_TEMPLATE = "{co} sees {w1} in one unit and {w2} in another, commentators say."


@dataclass(frozen=True)
class SynthConfig:
    days: int = 500
    base_price: float = 100.0
    volatility: float = 0.005
    jump_probability: float = 0.08
    jump_magnitude: float = 0.06
    articles_per_day: tuple[int, int] = (2, 5)
    filler_noise: float = 0.2
    seed: int = 0
    start: str = "2021-01-04"
    company: str = "Acme Corp"

    def __post_init__(self):
        if self.days < 2:
            raise ValueError("need at least 2 days")
        if not self.base_price > 0:
            raise ValueError("base price must be positive")
        if self.volatility < 0 or self.jump_magnitude < 0:
            raise ValueError("volatility and jump magnitude must be non-negative")
        if not 0 <= self.jump_probability <= 1 or not 0 <= self.filler_noise <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        lo, hi = self.articles_per_day
        if not 1 <= lo <= hi:
            raise ValueError("articles_per_day must satisfy 1 <= lo <= hi")
        if self.jump_magnitude >= 1:
            raise ValueError("jump magnitude must be below 1 so prices stay positive")


@dataclass(frozen=True)
class Event:
    date: np.datetime64
    direction: int
    magnitude: float


@dataclass(frozen=True)
class SynthData:
    series: OhlcvSeries
    feed_json: str
    events: list[Event]

    def events_csv(self) -> str:
        lines = ["date,direction,magnitude"]
        lines += [f"{e.date},{e.direction:+d},{e.magnitude:g}" for e in self.events]
        return "\n".join(lines) + "\n"


def trading_days(start: str, count: int) -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(count), roll="forward")


def _article(rng: np.random.Generator, day: np.datetime64, title: str, body: str) -> dict:
    source = SOURCES[rng.integers(len(SOURCES))]
    seconds = int(rng.integers(0, 23 * 3600))
    stamp = datetime.combine(day.item(), datetime.min.time(), tzinfo=timezone.utc) + timedelta(seconds=seconds)
    slug = f"{day}-{int(rng.integers(1_000_000)):06d}"
    return {
        "source": {"id": None, "name": source},
        "author": None,
        "title": title,
        "description": body,
        "url": f"https://news.example.com/{slug}",
        "publishedAt": stamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "content": f"{body} Read more at https://news.example.com/{slug}",
    }


def _event_article(rng, cfg: SynthConfig, day, direction: int) -> dict:
    words = POSITIVE_WORDS if direction > 0 else NEGATIVE_WORDS
    w1, w2, w3 = (words[i] for i in rng.choice(len(words), size=3, replace=False))
    template = EVENT_TEMPLATES[rng.integers(len(EVENT_TEMPLATES))]
    title = f"{cfg.company}: {w1} {'lifts' if direction > 0 else 'hits'} outlook"
    return _article(rng, day, title, template.format(co=cfg.company, w1=w1, w2=w2, w3=w3))


def _filler_article(rng, cfg: SynthConfig, day) -> dict:
    title = f"{cfg.company} daily brief"
    if rng.random() < cfg.filler_noise:
        # one word of each polarity: ambiguous text that should score neutral
        w1 = POSITIVE_WORDS[rng.integers(len(POSITIVE_WORDS))]
        w2 = NEGATIVE_WORDS[rng.integers(len(NEGATIVE_WORDS))]
        if rng.random() < 0.5:
            w1, w2 = w2, w1
        body = MIXED_TEMPLATE.format(co=cfg.company, w1=w1, w2=w2)
    else:
        body = FILLER_TEMPLATES[rng.integers(len(FILLER_TEMPLATES))].format(co=cfg.company)
    return _article(rng, day, title, body)


def generate(config: SynthConfig = SynthConfig()) -> SynthData:
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n = cfg.days
    dates = trading_days(cfg.start, n)

    # no event on the last day: its jump would fall outside the series
    is_event = rng.random(n) < cfg.jump_probability
    is_event[-1] = False
    direction = np.where(rng.random(n) < 0.5, 1, -1)
    shocks = rng.standard_normal(n)

    log_ret = cfg.volatility * shocks - 0.5 * cfg.volatility ** 2
    log_ret[0] = 0.0
    jump = np.zeros(n)
    jump[1:] = np.where(is_event[:-1], np.log1p(direction[:-1] * cfg.jump_magnitude), 0.0)
    close = cfg.base_price * np.exp(np.cumsum(log_ret + jump))

    prev = np.concatenate([[cfg.base_price], close[:-1]])
    open_ = prev * np.exp(rng.normal(0.0, cfg.volatility / 4, n))
    high = np.maximum(open_, close) * np.exp(np.abs(rng.normal(0.0, cfg.volatility / 2, n)))
    low = np.minimum(open_, close) * np.exp(-np.abs(rng.normal(0.0, cfg.volatility / 2, n)))
    volume = np.round(np.exp(rng.normal(np.log(1e6), 0.3, n)))
    # round to the precision written to CSV so the series survives a CSV round trip
    series = OhlcvSeries(dates, *(np.round(a, 6) for a in (open_, high, low, close, close)), volume)

    lo, hi = cfg.articles_per_day
    articles, events = [], []
    for i, day in enumerate(dates):
        if is_event[i]:
            events.append(Event(day, int(direction[i]), cfg.jump_magnitude))
        for _ in range(int(rng.integers(lo, hi + 1))):
            if is_event[i]:
                articles.append(_event_article(rng, cfg, day, int(direction[i])))
            else:
                articles.append(_filler_article(rng, cfg, day))
    feed = {"status": "ok", "totalResults": len(articles), "articles": articles}
    return SynthData(series, json.dumps(feed, indent=2) + "\n", events)
