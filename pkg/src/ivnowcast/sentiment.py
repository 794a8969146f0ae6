"""Tweet polarity scoring and end-of-day aggregation.

The reference scorer is a small lexicon + negation rule. Anything with a
``score(text) -> float`` method can stand in for it, and records that carry a
precomputed score never touch the scorer at all.
"""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

NORMALIZATION_ALPHA = 15.0
NEGATION_WINDOW = 3
MARKET_CLOSE = time(16, 0)

NEGATORS = frozenset(
    """not no never none nobody nothing neither nor nowhere cannot without
    isn't aren't wasn't weren't don't doesn't didn't won't wouldn't can't
    couldn't shouldn't hasn't haven't hadn't ain't isnt arent wasnt werent
    dont doesnt didnt wont wouldnt cant couldnt shouldnt hasnt havent hadnt""".split()
)

_TOKEN = re.compile(r"[a-z][a-z']*")


class UnknownSymbol(KeyError):
    pass


class Scorer(Protocol):
    def score(self, text: str) -> float: ...


def tokenize(text: str) -> list[str]:
    # cashtags ($AAPL) and urls contribute nothing; strip them before word splitting
    text = re.sub(r"https?://\S+|\$[A-Za-z.]+", " ", text)
    return _TOKEN.findall(text.lower())


def normalize(total: float, alpha: float = NORMALIZATION_ALPHA) -> float:
    return total / math.sqrt(total * total + alpha)


def score_text(
    text: str,
    lexicon: Mapping[str, float],
    negators: frozenset[str] = NEGATORS,
    window: int = NEGATION_WINDOW,
    alpha: float = NORMALIZATION_ALPHA,
) -> float:
    if not lexicon:
        raise ValueError("lexicon is empty")
    tokens = tokenize(text or "")
    total = 0.0
    for i, tok in enumerate(tokens):
        v = lexicon.get(tok)
        if v is None:
            continue
        if any(t in negators for t in tokens[max(0, i - window):i]):
            v = -v
        total += v
    if total == 0.0:
        return 0.0
    return normalize(total, alpha)


@dataclass
class LexiconScorer:
    lexicon: Mapping[str, float]
    negators: frozenset[str] = NEGATORS
    window: int = NEGATION_WINDOW
    alpha: float = NORMALIZATION_ALPHA

    def score(self, text: str) -> float:
        return score_text(text, self.lexicon, self.negators, self.window, self.alpha)


def load_lexicon(path: str | Path | None = None) -> dict[str, float]:
    """Read a ``token<TAB>valence`` file; ``None`` loads the bundled starter lexicon."""
    if path is None:
        text = resources.files("ivnowcast.data").joinpath("lexicon.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    lex = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ValueError(f"{path or 'lexicon.tsv'}:{lineno}: expected token<TAB>valence")
        lex[parts[0].strip().lower()] = float(parts[1])
    return lex


@dataclass(frozen=True)
class TweetRecord:
    symbol: str
    timestamp: datetime
    text: str | None = None
    precomputed_score: float | None = None

    def __post_init__(self):
        if self.text is None and self.precomputed_score is None:
            raise ValueError("tweet needs text or a precomputed score")
        if self.precomputed_score is not None and not -1.0 <= self.precomputed_score <= 1.0:
            raise ValueError(f"score {self.precomputed_score} outside [-1, 1]")

    def polarity(self, scorer: Scorer | None) -> float:
        if self.precomputed_score is not None:
            return self.precomputed_score
        if scorer is None:
            raise ValueError("tweet has only text but no scorer was supplied")
        return scorer.score(self.text)


@dataclass(frozen=True)
class DailySocialStats:
    symbol: str
    date: date
    tweet_count: int
    mean_polarity: float


def session_date(ts: datetime, close: time = MARKET_CLOSE) -> date:
    """Calendar date of the session a tweet precedes; after-close tweets roll forward."""
    d = ts.date()
    if ts.timetz().replace(tzinfo=None) > close:
        d += timedelta(days=1)
    return d


def aggregate_daily(
    records: Iterable[TweetRecord],
    calendar: Sequence[date],
    scorer: Scorer | None = None,
    universe: Iterable[str] | None = None,
    close: time = MARKET_CLOSE,
) -> dict[str, list[DailySocialStats]]:
    """Daily tweet count and mean polarity per symbol on a trading calendar.

    A tweet belongs to the first trading day on or after its session date.
    Tweets outside the calendar span are dropped. Symbols in ``universe`` with
    no tweets at all still get a zero-filled series.
    """
    cal = sorted(calendar)
    if not cal:
        raise ValueError("empty trading calendar")
    allowed = None if universe is None else set(universe)
    buckets: dict[str, list[list[float]]] = {}
    for s in allowed or ():
        buckets[s] = [[] for _ in cal]
    first, last = cal[0], cal[-1]
    for rec in records:
        if allowed is not None and rec.symbol not in allowed:
            raise UnknownSymbol(rec.symbol)
        d = session_date(rec.timestamp, close)
        if d < first or d > last:
            continue
        if rec.symbol not in buckets:
            buckets[rec.symbol] = [[] for _ in cal]
        buckets[rec.symbol][bisect.bisect_left(cal, d)].append(rec.polarity(scorer))
    out = {}
    for sym in sorted(buckets):
        # fsum keeps the mean independent of record order
        out[sym] = [
            DailySocialStats(sym, d, len(b), math.fsum(b) / len(b) if b else 0.0)
            for d, b in zip(cal, buckets[sym])
        ]
    return out
