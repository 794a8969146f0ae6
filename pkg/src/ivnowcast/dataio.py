"""CSV / JSONL readers and writers for every on-disk format the pipeline uses.

Readers raise ``InputError`` carrying ``path:line`` so the CLI can point at
the offending row.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from datetime import date, datetime
from importlib import resources
from pathlib import Path
from typing import Iterator
from zoneinfo import ZoneInfo

import pandas as pd

from .ivindex import OptionChainSnapshot, OptionQuote
from .sentiment import TweetRecord

EXCHANGE_TZ = ZoneInfo("America/New_York")

CHAIN_COLUMNS = ("symbol", "asof_date", "expiry_date", "right", "strike", "bid", "ask")


class InputError(ValueError):
    pass


def _rows(path: str | Path, required: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}:1: missing column(s) {', '.join(missing)}")
        for row in reader:
            yield reader.line_num, row


def _parse(path, line, what, fn, value):
    try:
        return fn(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}:{line}: bad {what} {value!r} ({exc})") from None


def _date(s: str) -> date:
    return date.fromisoformat(s.strip())


def read_rates(path: str | Path) -> pd.Series:
    out = {}
    for line, row in _rows(path, ("date", "rate")):
        d = _parse(path, line, "date", _date, row["date"])
        out[pd.Timestamp(d)] = _parse(path, line, "rate", float, row["rate"])
    return pd.Series(out, dtype=float).sort_index()


def rate_for(rates: pd.Series | None, d: date, default: float = 0.0) -> float:
    """Rate on ``d``, else the most recent earlier rate, else ``default``."""
    if rates is None or rates.empty:
        return default
    prior = rates[rates.index <= pd.Timestamp(d)]
    return float(prior.iloc[-1]) if len(prior) else default


def read_chains(path: str | Path, rates: pd.Series | None = None) -> list[OptionChainSnapshot]:
    """One snapshot per (symbol, asof_date), ordered by symbol then date.

    An optional ``volume`` column is carried into each quote.
    """
    groups: dict[tuple[str, date], list[OptionQuote]] = defaultdict(list)
    for line, row in _rows(path, CHAIN_COLUMNS):
        sym = (row["symbol"] or "").strip()
        if not sym:
            raise InputError(f"{path}:{line}: empty symbol")
        asof = _parse(path, line, "asof_date", _date, row["asof_date"])
        vol = row.get("volume")
        try:
            q = OptionQuote(
                expiry_date=_parse(path, line, "expiry_date", _date, row["expiry_date"]),
                strike=_parse(path, line, "strike", float, row["strike"]),
                right=(row["right"] or "").strip().lower(),
                bid=_parse(path, line, "bid", float, row["bid"]),
                ask=_parse(path, line, "ask", float, row["ask"]),
                volume=_parse(path, line, "volume", float, vol) if vol not in (None, "") else 0.0,
            )
        except InputError:
            raise
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None
        if q.expiry_date <= asof:
            raise InputError(f"{path}:{line}: expiry {q.expiry_date} not after asof date {asof}")
        groups[(sym, asof)].append(q)
    return [
        OptionChainSnapshot(sym, d, tuple(qs), rate_for(rates, d))
        for (sym, d), qs in sorted(groups.items())
    ]


def write_iv(rows: list[tuple[str, date, float]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["symbol", "date", "iv"])
        for sym, d, iv in rows:
            w.writerow([sym, d.isoformat(), repr(float(iv))])


def read_series(path: str | Path, value: str, date_col: str = "date") -> dict[str, pd.Series]:
    """Per-symbol series from a ``symbol,date,<value>`` CSV."""
    data: dict[str, dict] = defaultdict(dict)
    for line, row in _rows(path, ("symbol", date_col, value)):
        d = pd.Timestamp(_parse(path, line, date_col, _date, row[date_col]))
        v = _parse(path, line, value, float, row[value])
        sym = row["symbol"].strip()
        if d in data[sym]:
            raise InputError(f"{path}:{line}: duplicate {sym} {d.date()}")
        data[sym][d] = v
    return {s: pd.Series(v, dtype=float, name=value).sort_index() for s, v in sorted(data.items())}


def read_prices(path: str | Path) -> dict[str, pd.Series]:
    return read_series(path, "adj_close")


def read_iv(path: str | Path) -> dict[str, pd.Series]:
    return read_series(path, "iv")


def _timestamp(s: str) -> datetime:
    ts = datetime.fromisoformat(s.strip().replace("Z", "+00:00"))
    if ts.tzinfo is not None:
        ts = ts.astimezone(EXCHANGE_TZ).replace(tzinfo=None)
    return ts


def read_scores(path: str | Path) -> Iterator[TweetRecord]:
    """Pre-scored tweets: ``symbol,ts,score``. Naive timestamps are exchange-local."""
    for line, row in _rows(path, ("symbol", "ts", "score")):
        ts = _parse(path, line, "ts", _timestamp, row["ts"])
        score = _parse(path, line, "score", float, row["score"])
        try:
            yield TweetRecord(row["symbol"].strip(), ts, precomputed_score=score)
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from None


def read_tweets_jsonl(path: str | Path) -> Iterator[TweetRecord]:
    """Raw tweets, one JSON object per line with ``symbol``, ``ts`` and ``text``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with path.open(encoding="utf-8") as fh:
        for line, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                ts = _timestamp(obj["ts"])
                yield TweetRecord(obj["symbol"], ts, text=obj.get("text"), precomputed_score=obj.get("score"))
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{line}: {exc}") from None


def read_universe(path: str | Path | None = None) -> dict[str, str]:
    """ticker -> sector symbol. ``None`` gives the bundled 165-stock universe."""
    if path is None:
        with resources.files("ivnowcast.data").joinpath("universe.csv").open(encoding="utf-8") as fh:
            return {r["ticker"]: r["sector"] for r in csv.DictReader(fh)}
    return {row["ticker"].strip(): row["sector"].strip() for _, row in _rows(path, ("ticker", "sector"))}


def read_liquidity(path: str | Path) -> dict[str, float]:
    """Mean daily option dollar volume per symbol from ``symbol,date,dollar_volume``."""
    return {s: float(v.mean()) for s, v in read_series(path, "dollar_volume").items()}


def social_frame(stats) -> pd.DataFrame:
    """DailySocialStats list -> frame indexed by date."""
    return pd.DataFrame(
        {
            "tweet_count": [s.tweet_count for s in stats],
            "mean_polarity": [s.mean_polarity for s in stats],
        },
        index=pd.DatetimeIndex([pd.Timestamp(s.date) for s in stats], name="date"),
    )


def write_matrix(matrix, path: str | Path) -> None:
    df = matrix.to_frame()
    df.index = df.index.strftime("%Y-%m-%d")
    df["target"] = df["target"].astype(int)
    df.to_csv(path, index=True, lineterminator="\n")


def regimes_from_csv(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = {"symbol", "date", "regime"} - set(df.columns)
    if missing:
        raise InputError(f"{path}:1: missing column(s) {', '.join(sorted(missing))}")
    df["date"] = pd.to_datetime(df["date"])
    return df
