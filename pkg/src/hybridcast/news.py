"""News-API shaped feeds: parsing, text cleaning and source weights."""

from __future__ import annotations

import json
import os
import re
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import NamedTuple

API_KEY_ENV = "NEWS_API_KEY"

_CONTROL = re.compile(r"[\x00-\x1f\x7f-\x9f]")
URL_PATTERN = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*://")
_URL_TOKEN = re.compile(r"\S*[A-Za-z][A-Za-z0-9+.\-]*://\S*")
_SPACE = re.compile(r"\s+")


class FeedError(ValueError):
    """The feed document itself is unusable (not JSON, wrong shape)."""


@dataclass(frozen=True)
class NewsArticle:
    source_name: str
    title: str
    body: str
    published_at: datetime  # timezone-aware, UTC

    def __post_init__(self):
        if not self.source_name.strip():
            raise ValueError("source_name must be non-empty")
        if not (self.title or self.body):
            raise ValueError("title and body cannot both be empty")
        if self.published_at.tzinfo is None:
            raise ValueError("published_at must be timezone-aware")


class ParsedFeed(NamedTuple):
    articles: list[NewsArticle]
    skipped: int


def parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _text(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def parse_feed(json_text: str | bytes) -> ParsedFeed:
    """Map each well-formed ``articles`` entry onto a :class:`NewsArticle`.

    ``content`` is the body; ``description`` stands in when content is
    absent.  Entries with no title and no body, no source name or an
    unreadable ``publishedAt`` are counted in ``skipped``.
    """
    try:
        if isinstance(json_text, (bytes, bytearray)):
            json_text = bytes(json_text).decode("utf-8")
        doc = json.loads(json_text)
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise FeedError(f"feed is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "articles" not in doc:
        raise FeedError("feed has no 'articles' key")
    entries = doc["articles"]
    if not isinstance(entries, list):
        raise FeedError("'articles' must be a list")

    articles, skipped = [], 0
    for entry in entries:
        if not isinstance(entry, dict):
            skipped += 1
            continue
        source = entry.get("source")
        name = _text(source.get("name")) if isinstance(source, dict) else _text(source)
        title = _text(entry.get("title"))
        body = _text(entry.get("content")) or _text(entry.get("description"))
        stamp = entry.get("publishedAt")
        try:
            published = parse_timestamp(stamp) if isinstance(stamp, str) else None
        except (ValueError, OverflowError):
            published = None
        if not name or not (title or body) or published is None:
            skipped += 1
            continue
        articles.append(NewsArticle(name, title, body, published))
    return ParsedFeed(articles, skipped)


def clean_text(text: str) -> str:
    text = _CONTROL.sub(" ", text)
    text = _URL_TOKEN.sub(" ", text)
    return _SPACE.sub(" ", text).strip()


def prepare_text(article: NewsArticle) -> str:
    """Title and body joined by ``". "``, with control characters and URLs removed."""
    parts = [p for p in (clean_text(article.title), clean_text(article.body)) if p]
    return ". ".join(parts)


def fetch_feed(url: str, params: dict | None = None, api_key: str | None = None,
               timeout: float = 30.0) -> ParsedFeed:
    """GET a News-API endpoint and parse the response.

    The key is read from ``$NEWS_API_KEY`` when not passed explicitly.
    """
    api_key = api_key or os.environ.get(API_KEY_ENV)
    if not api_key:
        raise FeedError(f"no API key: set ${API_KEY_ENV}")
    query = urllib.parse.urlencode(params or {})
    req = urllib.request.Request(f"{url}?{query}" if query else url,
                                 headers={"X-Api-Key": api_key, "User-Agent": "hybridcast"})
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return parse_feed(resp.read())


@dataclass(frozen=True)
class SourceWeightRegistry:
    weights: dict[str, float] = field(default_factory=dict)
    default_weight: float = 0.5

    def __post_init__(self):
        if not 0 < self.default_weight <= 1:
            raise ValueError("default weight must lie in (0, 1]")
        folded = {}
        for name, w in self.weights.items():
            if not 0 < w <= 1:
                raise ValueError(f"weight for {name!r} must lie in (0, 1], got {w}")
            folded[name.strip().casefold()] = float(w)
        object.__setattr__(self, "weights", folded)

    def __getitem__(self, source_name: str) -> float:
        return self.weights.get(source_name.strip().casefold(), self.default_weight)

    @classmethod
    def from_text(cls, text: str, default_weight: float | None = None) -> "SourceWeightRegistry":
        """Parse ``source<TAB>weight`` lines; ``#`` starts a comment.

        A ``*`` source name sets the default weight.
        """
        weights, default = {}, default_weight
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            try:
                name, value = line.rsplit("\t", 1)
                w = float(value)
            except ValueError:
                raise ValueError(f"line {lineno}: expected 'source<TAB>weight'") from None
            name = name.strip()
            if name == "*":
                default = w if default_weight is None else default_weight
            else:
                weights[name] = w
        return cls(weights, 0.5 if default is None else default)

    def to_text(self) -> str:
        lines = [f"*\t{self.default_weight:g}"]
        lines += [f"{name}\t{w:g}" for name, w in sorted(self.weights.items())]
        return "\n".join(lines) + "\n"


def source_weight(registry: SourceWeightRegistry, source_name: str) -> float:
    return registry[source_name]


def default_registry() -> SourceWeightRegistry:
    return SourceWeightRegistry.from_text(
        resources.files("hybridcast").joinpath("data/source_weights.tsv").read_text("utf-8"))
