"""30-day implied volatility index from an end-of-day option chain.

Model-free variance per expiry (CBOE VIX construction) followed by linear
interpolation of total variance to a constant 30-day horizon.

    sigma^2 = 2/T * sum_i dK_i / K_i^2 * exp(R T) * Q(K_i) - 1/T * (F/K0 - 1)^2
    iv      = 100 * sqrt(sigma^2_30)

Time is measured in calendar days / 365.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Sequence

DAYS_PER_YEAR = 365.0
TARGET_DAYS = 30


class IvIndexError(ValueError):
    """Base class for chain problems that prevent an index value."""


class EmptySide(IvIndexError):
    pass


class NoPairedStrike(IvIndexError):
    pass


class NoExpiries(IvIndexError):
    pass


@dataclass(frozen=True)
class OptionQuote:
    expiry_date: date
    strike: float
    right: str  # "call" | "put"
    bid: float
    ask: float
    volume: float = 0.0

    def __post_init__(self):
        if self.right not in ("call", "put"):
            raise ValueError(f"right must be 'call' or 'put', got {self.right!r}")
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not (0 <= self.bid <= self.ask):
            raise ValueError(f"need 0 <= bid <= ask, got bid={self.bid} ask={self.ask}")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass(frozen=True)
class OptionChainSnapshot:
    symbol: str
    asof_date: date
    quotes: tuple[OptionQuote, ...]
    risk_free_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))
        for q in self.quotes:
            if q.expiry_date <= self.asof_date:
                raise ValueError(
                    f"{self.symbol} {self.asof_date}: expiry {q.expiry_date} is not after asof date"
                )

    def expiries(self) -> dict[date, "ExpiryQuotes"]:
        grouped: dict[date, list[OptionQuote]] = {}
        for q in self.quotes:
            grouped.setdefault(q.expiry_date, []).append(q)
        return {d: ExpiryQuotes.from_quotes(qs) for d, qs in sorted(grouped.items())}


@dataclass(frozen=True)
class StrikeRow:
    strike: float
    call: OptionQuote | None = None
    put: OptionQuote | None = None


@dataclass(frozen=True)
class ExpiryQuotes:
    """Quotes for a single expiry, one row per listed strike (ascending)."""

    rows: tuple[StrikeRow, ...]

    @classmethod
    def from_quotes(cls, quotes: Iterable[OptionQuote]) -> "ExpiryQuotes":
        by_strike: dict[float, dict[str, OptionQuote]] = {}
        for q in quotes:
            slot = by_strike.setdefault(q.strike, {})
            if q.right in slot:
                raise ValueError(f"duplicate {q.right} quote at strike {q.strike}")
            slot[q.right] = q
        rows = tuple(
            StrikeRow(k, by_strike[k].get("call"), by_strike[k].get("put"))
            for k in sorted(by_strike)
        )
        return cls(rows)

    @property
    def strikes(self) -> list[float]:
        return [r.strike for r in self.rows]


@dataclass(frozen=True)
class SelectedStrike:
    strike: float
    delta_k: float
    q: float


@dataclass(frozen=True)
class TermVariance:
    expiry_date: date | None
    T: float
    F: float
    K0: float
    sigma_squared: float
    strikes: tuple[SelectedStrike, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class IvPoint:
    asof_date: date
    iv: float


def forward_and_k0(chain: ExpiryQuotes, r: float, t: float) -> tuple[float, float]:
    """Forward level from put-call parity at the strike where |call - put| is smallest.

    K0 is the largest listed strike at or below the forward. Ties in the
    call/put distance go to the lower strike.
    """
    best = None
    for row in chain.rows:
        if row.call is None or row.put is None:
            continue
        diff = row.call.mid - row.put.mid
        if best is None or abs(diff) < abs(best[1]):
            best = (row.strike, diff)
    if best is None:
        raise NoPairedStrike("no strike has both a call and a put quote")
    k_star, diff = best
    forward = k_star + math.exp(r * t) * diff
    below = [k for k in chain.strikes if k <= forward]
    if not below:
        raise EmptySide(f"forward {forward:.6g} lies below every listed strike")
    return forward, max(below)


def _usable(q: OptionQuote | None) -> bool:
    return q is not None and q.bid > 0


def select_term_strikes(chain: ExpiryQuotes, forward: float, k0: float) -> list[SelectedStrike]:
    """Out-of-the-money strike strip around K0 with strike intervals and mid prices.

    Puts below K0 and calls above K0, walking outward and skipping zero-bid
    quotes; a side ends after two consecutive zero bids. At K0 the put and
    call mids are averaged.
    """
    rows = chain.rows
    strikes = chain.strikes
    try:
        i0 = strikes.index(k0)
    except ValueError:
        raise EmptySide(f"K0={k0} is not a listed strike") from None

    def walk(indices, right):
        out = []
        zeros = 0
        for i in indices:
            q = getattr(rows[i], right)
            if _usable(q):
                zeros = 0
                out.append((rows[i].strike, q.mid))
            else:
                zeros += 1
                if zeros >= 2:
                    break
        return out

    puts = walk(range(i0 - 1, -1, -1), "put")[::-1]
    calls = walk(range(i0 + 1, len(rows)), "call")
    if not puts and not calls:
        raise EmptySide(f"no usable out-of-the-money strike on either side of K0={k0}")

    centre = [q.mid for q in (rows[i0].put, rows[i0].call) if q is not None]
    if not centre:
        raise EmptySide(f"no quote at K0={k0}")
    selected = puts + [(k0, sum(centre) / len(centre))] + calls

    ks = [k for k, _ in selected]
    out = []
    n = len(ks)
    for i, (k, q) in enumerate(selected):
        if i == 0:
            dk = ks[1] - ks[0]
        elif i == n - 1:
            dk = ks[-1] - ks[-2]
        else:
            dk = 0.5 * (ks[i + 1] - ks[i - 1])
        out.append(SelectedStrike(k, dk, q))
    return out


def term_variance(chain: ExpiryQuotes, r: float, t: float, expiry_date: date | None = None) -> TermVariance:
    if not t > 0:
        raise ValueError(f"time to expiry must be positive, got {t}")
    forward, k0 = forward_and_k0(chain, r, t)
    strip = select_term_strikes(chain, forward, k0)
    growth = math.exp(r * t)
    total = 0.0
    for s in strip:
        total += s.delta_k / (s.strike * s.strike) * growth * s.q
    var = 2.0 / t * total - (forward / k0 - 1.0) ** 2 / t
    return TermVariance(expiry_date, t, forward, k0, max(var, 0.0), tuple(strip))


def interpolate_variance(near: TermVariance, nxt: TermVariance, target_t: float) -> float:
    """Annualized variance at ``target_t`` from linear interpolation of total variance.

    Extrapolates when ``target_t`` lies outside [near.T, nxt.T]; floored at 0.
    """
    if nxt.T == near.T:
        return 0.5 * (near.sigma_squared + nxt.sigma_squared)
    w = (nxt.T - target_t) / (nxt.T - near.T)
    total = w * near.T * near.sigma_squared + (1.0 - w) * nxt.T * nxt.sigma_squared
    return max(total / target_t, 0.0)


def _pick_terms(terms: Sequence[TermVariance], target_t: float) -> tuple[TermVariance, TermVariance]:
    below = [x for x in terms if x.T <= target_t]
    above = [x for x in terms if x.T > target_t]
    if below and above:
        return below[-1], above[0]
    # both on the same side: the two closest to the target
    ranked = sorted(terms, key=lambda x: (abs(x.T - target_t), x.T))[:2]
    return tuple(sorted(ranked, key=lambda x: x.T))


def iv30(chain: OptionChainSnapshot, target_days: int = TARGET_DAYS) -> IvPoint:
    expiries = chain.expiries()
    if not expiries:
        raise NoExpiries(f"{chain.symbol} {chain.asof_date}: chain has no quotes")
    terms = []
    last_error = None
    for expiry, quotes in expiries.items():
        t = (expiry - chain.asof_date).days / DAYS_PER_YEAR
        try:
            terms.append(term_variance(quotes, chain.risk_free_rate, t, expiry))
        except IvIndexError as exc:
            last_error = exc
    if not terms:
        raise last_error
    if len(terms) == 1:
        var = terms[0].sigma_squared
    else:
        target_t = target_days / DAYS_PER_YEAR
        near, nxt = _pick_terms(terms, target_t)
        var = interpolate_variance(near, nxt, target_t)
    return IvPoint(chain.asof_date, 100.0 * math.sqrt(var))


def option_dollar_volume(chain: OptionChainSnapshot) -> float:
    """Sum of contract volume x mid price x 100 over every quote in the snapshot."""
    return sum(q.volume * q.mid * 100.0 for q in chain.quotes)
