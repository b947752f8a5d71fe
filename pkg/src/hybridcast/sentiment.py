"""Article sentiment scoring and weighted per-interval aggregation."""

from __future__ import annotations

import csv
import io
import math
import re
import subprocess
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from importlib import resources
from typing import Iterable, Protocol, Sequence

from .news import NewsArticle, SourceWeightRegistry, parse_timestamp, prepare_text

_WORD = re.compile(r"[a-z]+(?:[-'][a-z]+)*")
MAX_TOKENS = 512


class Tag(str, Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    NEUTRAL = "NEUTRAL"

    @classmethod
    def _missing_(cls, value):
        # some classifiers spell the neutral label "NEURAL"
        if isinstance(value, str) and value.upper() == "NEURAL":
            return cls.NEUTRAL
        return None


@dataclass(frozen=True)
class SentimentLabel:
    tag: Tag
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


class Scorer(Protocol):
    def score(self, text: str) -> SentimentLabel: ...


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class LexiconScorer:
    """Counts positive and negative lexicon hits.

    confidence = |pos - neg| / max(1, pos + neg); the tag follows the sign.
    """

    def __init__(self, positive: Iterable[str], negative: Iterable[str]):
        self.positive = frozenset(w.lower() for w in positive)
        self.negative = frozenset(w.lower() for w in negative)
        overlap = self.positive & self.negative
        if overlap:
            raise ValueError(f"words listed with both polarities: {sorted(overlap)[:5]}")

    @classmethod
    def from_text(cls, text: str) -> "LexiconScorer":
        pos, neg = [], []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                word, polarity = line.split("\t")
            except ValueError:
                raise ValueError(f"line {lineno}: expected 'word<TAB>+' or 'word<TAB>-'") from None
            if polarity.strip() == "+":
                pos.append(word.strip())
            elif polarity.strip() == "-":
                neg.append(word.strip())
            else:
                raise ValueError(f"line {lineno}: polarity must be + or -")
        return cls(pos, neg)

    @classmethod
    def default(cls) -> "LexiconScorer":
        return cls.from_text(resources.files("hybridcast").joinpath("data/lexicon.tsv").read_text("utf-8"))

    def hits(self, text: str) -> tuple[int, int]:
        words = tokenize(text)
        return sum(w in self.positive for w in words), sum(w in self.negative for w in words)

    def score(self, text: str) -> SentimentLabel:
        pos, neg = self.hits(text)
        if pos == neg:
            return SentimentLabel(Tag.NEUTRAL, 0.0)
        conf = abs(pos - neg) / max(1, pos + neg)
        return SentimentLabel(Tag.POSITIVE if pos > neg else Tag.NEGATIVE, conf)


def truncate_tokens(text: str, limit: int = MAX_TOKENS) -> str:
    words = text.split()
    return text if len(words) <= limit else " ".join(words[:limit])


class SubprocessScorer:
    """Delegates scoring to a child process, one request per line.

    Each cleaned text (newlines flattened, at most 512 whitespace tokens) is
    written as one line; the child answers ``TAG<TAB>confidence``.
    """

    def __init__(self, command: Sequence[str], max_tokens: int = MAX_TOKENS):
        self.max_tokens = max_tokens
        self._proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)

    def score(self, text: str) -> SentimentLabel:
        line = truncate_tokens(" ".join(text.split()), self.max_tokens)
        self._proc.stdin.write(line + "\n")
        self._proc.stdin.flush()
        reply = self._proc.stdout.readline()
        if not reply:
            raise RuntimeError(f"scorer process exited (status {self._proc.poll()})")
        try:
            tag, conf = reply.rstrip("\n").split("\t")
            return SentimentLabel(Tag(tag.strip().upper()), float(conf))
        except ValueError as exc:
            raise RuntimeError(f"bad scorer reply {reply!r}: {exc}") from None

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def signed_score(label: SentimentLabel) -> float:
    """NEGATIVE flips the sign; POSITIVE and NEUTRAL keep the confidence as is."""
    return -label.confidence if label.tag is Tag.NEGATIVE else label.confidence


def score_article(text: str, scorer: Scorer | None = None) -> SentimentLabel:
    if not text.strip():
        return SentimentLabel(Tag.NEUTRAL, 0.0)
    return (scorer or _default_scorer()).score(text)


_DEFAULT: LexiconScorer | None = None


def _default_scorer() -> LexiconScorer:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = LexiconScorer.default()
    return _DEFAULT


@dataclass(frozen=True)
class ScoredArticle:
    article: NewsArticle
    label: SentimentLabel
    signed_score: float
    weight: float

    def __post_init__(self):
        if abs(self.signed_score) > 1:
            raise ValueError("signed score must lie in [-1, 1]")
        if not 0 < self.weight <= 1:
            raise ValueError("weight must lie in (0, 1]")


def score_articles(articles: Iterable[NewsArticle], registry: SourceWeightRegistry,
                   scorer: Scorer | None = None) -> list[ScoredArticle]:
    out = []
    for art in articles:
        label = score_article(prepare_text(art), scorer)
        out.append(ScoredArticle(art, label, signed_score(label), registry[art.source_name]))
    return out


def weighted_cumulative(scored: Sequence[ScoredArticle] | Sequence[tuple[float, float]]) -> float:
    """Weighted mean ``sum(w*x) / sum(w)`` of signed scores.

    Accepts scored articles or plain ``(weight, score)`` pairs.
    """
    pairs = [(s.weight, s.signed_score) if isinstance(s, ScoredArticle) else s for s in scored]
    if not pairs:
        raise ValueError("cannot aggregate an empty list")
    if any(not w > 0 for w, _ in pairs):
        raise ValueError("all weights must be positive")
    # fsum: exactly rounded, so the result does not depend on article order
    value = math.fsum(w * x for w, x in pairs) / math.fsum(w for w, _ in pairs)
    # keep the weighted mean inside the hull of its inputs despite rounding
    xs = [x for _, x in pairs]
    return min(max(value, min(xs)), max(xs))


@dataclass(frozen=True)
class SentimentInterval:
    start: datetime
    end: datetime
    w_cs: float
    article_count: int

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("interval end must follow its start")
        if not -1 <= self.w_cs <= 1:
            raise ValueError("W_cs must lie in [-1, 1]")


_SPANS = {"day": timedelta(days=1), "hour": timedelta(hours=1)}


def bucket_start(ts: datetime, granularity: str) -> datetime:
    ts = ts.astimezone(timezone.utc)
    if granularity == "day":
        return ts.replace(hour=0, minute=0, second=0, microsecond=0)
    return ts.replace(minute=0, second=0, microsecond=0)


def bucket_by_interval(scored: Iterable[ScoredArticle], granularity: str = "day") -> list[SentimentInterval]:
    """Group by UTC calendar day or hour; one interval per non-empty bucket."""
    if granularity not in _SPANS:
        raise ValueError(f"granularity must be 'day' or 'hour', got {granularity!r}")
    buckets: dict[datetime, list[ScoredArticle]] = {}
    for s in scored:
        buckets.setdefault(bucket_start(s.article.published_at, granularity), []).append(s)
    span = _SPANS[granularity]
    return [SentimentInterval(start, start + span, weighted_cumulative(members), len(members))
            for start, members in sorted(buckets.items())]


def scored_to_csv(scored: Iterable[ScoredArticle]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["published_at", "source", "weight", "tag", "confidence", "signed_score"])
    for s in scored:
        w.writerow([s.article.published_at.isoformat().replace("+00:00", "Z"), s.article.source_name,
                    f"{s.weight:g}", s.label.tag.value, f"{s.label.confidence:.6f}", f"{s.signed_score:.6f}"])
    return buf.getvalue()


def intervals_to_csv(intervals: Iterable[SentimentInterval]) -> str:
    lines = ["start,end,w_cs,article_count"]
    for iv in intervals:
        lines.append(f"{iv.start.isoformat().replace('+00:00', 'Z')},"
                     f"{iv.end.isoformat().replace('+00:00', 'Z')},{iv.w_cs:.10g},{iv.article_count}")
    return "\n".join(lines) + "\n"


def intervals_from_csv(text: str) -> list[SentimentInterval]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [SentimentInterval(parse_timestamp(r["start"]), parse_timestamp(r["end"]),
                              float(r["w_cs"]), int(r["article_count"])) for r in rows]
