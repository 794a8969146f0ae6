"""Synthetic market bundles with known ground truth.

IV follows a four-regime Markov chain. Each day the direction of the next
move is a fresh coin flip (biased only by the planted signal) and the step
size pulls the level toward the current regime mean, so with
``signal_strength = 0`` and ``polarity_coupling = 0`` tomorrow's direction
is independent of everything observable today.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from datetime import datetime, time, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import norm

from .config import ConfigError, float_list, read_kv, write_kv
from .hmm import REGIME_NAMES

REGIME_MEANS = (18.6, 22.3, 26.7, 35.3)
SECTORS = ("XLB", "XLC", "XLE", "XLF", "XLI", "XLK", "XLP", "XLRE", "XLU", "XLV", "XLY")


def sticky_transitions(n: int, persistence: float) -> np.ndarray:
    if n == 1:
        return np.ones((1, 1))
    A = np.full((n, n), (1.0 - persistence) / (n - 1))
    np.fill_diagonal(A, persistence)
    return A


@dataclass
class SyntheticSpec:
    n_stocks: int = 4
    n_days: int = 1300
    start_date: str = "2011-01-03"
    seed: int = 42
    regime_means: list[float] = field(default_factory=lambda: list(REGIME_MEANS))
    regime_stds: list[float] = field(default_factory=lambda: [1.0, 1.2, 1.5, 2.5])
    regime_persistence: float = 0.99
    transition: list[float] | None = None  # row-major K*K; overrides persistence
    step_fraction: float = 0.25
    reversion: float = 0.3
    signal_strength: float = 0.0
    regime_signal: list[float] | None = None  # per-regime multiplier on signal_strength
    polarity_coupling: float = 0.0  # shifts day-t tweet polarity toward the t -> t+1 move
    tweet_intensity: float = 20.0
    tweet_intensity_spread: float = 0.5  # lognormal sd across stocks
    price_vol: float = 0.015
    risk_free_rate: float = 0.01
    chain_days: int = 5
    chain_strike_step: float = 0.0125

    @property
    def n_regimes(self) -> int:
        return len(self.regime_means)

    def transition_matrix(self) -> np.ndarray:
        k = self.n_regimes
        if self.transition is not None:
            return np.asarray(self.transition, dtype=float).reshape(k, k)
        return sticky_transitions(k, self.regime_persistence)

    def validate(self) -> None:
        problems = []
        k = self.n_regimes
        if self.n_stocks < 1:
            problems.append("n_stocks: must be >= 1")
        if self.n_days < 3:
            problems.append("n_days: must be >= 3")
        if k < 1 or len(self.regime_stds) != k:
            problems.append("regime_stds: need one std per regime mean")
        if any(s <= 0 for s in self.regime_stds):
            problems.append("regime_stds: must be positive")
        if any(m <= 0 for m in self.regime_means):
            problems.append("regime_means: must be positive")
        if self.transition is not None:
            if len(self.transition) != k * k:
                problems.append(f"transition: need {k * k} entries")
            else:
                A = self.transition_matrix()
                if np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1) > 1e-9):
                    problems.append("transition: rows must be non-negative and sum to 1")
        elif not 0 <= self.regime_persistence <= 1:
            problems.append("regime_persistence: must lie in [0, 1]")
        if self.regime_signal is not None and len(self.regime_signal) != k:
            problems.append("regime_signal: need one multiplier per regime")
        if not 0 <= self.signal_strength <= 1:
            problems.append("signal_strength: must lie in [0, 1]")
        if not 0 <= abs(self.polarity_coupling) <= 1:
            problems.append("polarity_coupling: must lie in [-1, 1]")
        if self.tweet_intensity < 0:
            problems.append("tweet_intensity: must be >= 0")
        if self.step_fraction <= 0 or self.reversion < 0 or self.price_vol < 0:
            problems.append("step_fraction > 0, reversion >= 0 and price_vol >= 0 required")
        if self.chain_days < 0 or self.chain_strike_step <= 0:
            problems.append("chain_days >= 0 and chain_strike_step > 0 required")
        try:
            pd.Timestamp(self.start_date)
        except ValueError:
            problems.append(f"start_date: not a date {self.start_date!r}")
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticSpec":
        raw = read_kv(path)
        kinds = {f.name: f for f in fields(cls)}
        values, problems = {}, []
        for key, value in raw.items():
            if key not in kinds:
                problems.append(f"unknown key {key!r}")
                continue
            try:
                if key in ("regime_means", "regime_stds", "transition", "regime_signal"):
                    values[key] = float_list(value)
                elif key == "start_date":
                    values[key] = value
                elif key in ("n_stocks", "n_days", "seed", "chain_days"):
                    values[key] = int(value)
                else:
                    values[key] = float(value)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
        if problems:
            raise ConfigError(problems)
        spec = cls(**values)
        spec.validate()
        return spec


# --------------------------------------------------------------------------- pure HMM samples


def sample_hmm(
    means,
    stds,
    A,
    n: int,
    seed: int = 0,
    pi=None,
) -> tuple[np.ndarray, np.ndarray]:
    """States and i.i.d. Gaussian emissions from a Markov chain."""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    A = np.asarray(A, dtype=float)
    k = len(means)
    rng = np.random.default_rng(seed)
    pi = np.full(k, 1.0 / k) if pi is None else np.asarray(pi, dtype=float)
    states = np.empty(n, dtype=np.int64)
    states[0] = rng.choice(k, p=pi)
    cum = np.cumsum(A, axis=1)
    u = rng.random(n)
    for t in range(1, n):
        states[t] = min(int(np.searchsorted(cum[states[t - 1]], u[t], side="right")), k - 1)
    obs = means[states] + stds[states] * rng.standard_normal(n)
    return states, obs


# --------------------------------------------------------------------------- market bundle


@dataclass
class StockPath:
    symbol: str
    sector: str
    dates: pd.DatetimeIndex
    price: np.ndarray
    iv: np.ndarray
    states: np.ndarray
    signal: np.ndarray  # effective signal strength used for each day's draw
    labels: np.ndarray  # 1 if iv[t+1] > iv[t]; last day -1
    intensity: float
    liquidity: float


def trading_days(start: str, n: int) -> pd.DatetimeIndex:
    return pd.bdate_range(start=start, periods=n)


def simulate_stock(spec: SyntheticSpec, index: int, rng: np.random.Generator) -> StockPath:
    n = spec.n_days
    means = np.asarray(spec.regime_means, dtype=float)
    stds = np.asarray(spec.regime_stds, dtype=float)
    A = spec.transition_matrix()
    cum = np.cumsum(A, axis=1)
    k = len(means)
    mult = np.ones(k) if spec.regime_signal is None else np.asarray(spec.regime_signal, dtype=float)

    states = np.empty(n, dtype=np.int64)
    iv = np.empty(n)
    sig = np.zeros(n)
    labels = np.full(n, -1, dtype=np.int64)
    states[0] = rng.integers(k)
    iv[0] = means[states[0]]
    u_state = rng.random(n)
    u_dir = rng.random(n)
    for t in range(n - 1):
        s = states[t]
        a_now = stds[s] * spec.step_fraction
        z = (iv[t] - iv[t - 1]) / a_now if t else 0.0
        sig[t] = spec.signal_strength * mult[s]
        p_up = 0.5 + 0.5 * sig[t] * math.tanh(z)
        up = u_dir[t] < p_up
        nxt = min(int(np.searchsorted(cum[s], u_state[t + 1], side="right")), k - 1)
        states[t + 1] = nxt
        a = stds[nxt] * spec.step_fraction
        dev = (means[nxt] - iv[t]) / stds[nxt]
        expo = float(np.clip(spec.reversion * dev * (1 if up else -1), -4.0, 4.0))
        step = a * math.exp(expo)
        iv[t + 1] = iv[t] + step if up else max(iv[t] - step, 0.5 * iv[t])
        labels[t] = int(up)

    log_ret = spec.price_vol * rng.standard_normal(n)
    log_ret[0] = 0.0
    price = 100.0 * math.exp(rng.normal(0, 0.5)) * np.exp(np.cumsum(log_ret))
    intensity = spec.tweet_intensity * math.exp(rng.normal(0, spec.tweet_intensity_spread))
    # option liquidity grows with attention, loosely
    liquidity = 1e6 * (intensity / max(spec.tweet_intensity, 1e-9)) ** 1.2 * math.exp(rng.normal(0, 0.3))
    return StockPath(
        symbol=f"SYN{index:03d}",
        sector=SECTORS[index % len(SECTORS)],
        dates=trading_days(spec.start_date, n),
        price=price,
        iv=iv,
        states=states,
        signal=sig,
        labels=labels,
        intensity=intensity,
        liquidity=liquidity,
    )


def simulate_tweets(spec: SyntheticSpec, path: StockPath, rng: np.random.Generator) -> pd.DataFrame:
    """Pre-scored tweets; roughly a fifth arrive after the prior close and roll forward."""
    n = len(path.dates)
    lam = path.intensity * np.clip(path.iv / np.mean(spec.regime_means), 0.2, 5.0)
    counts = rng.poisson(lam)
    rows_sym, rows_ts, rows_score = [], [], []
    for t in range(n):
        c = int(counts[t])
        if c == 0:
            continue
        d = path.dates[t].date()
        drift = 0.05
        if path.labels[t] >= 0:
            drift += spec.polarity_coupling * (2 * path.labels[t] - 1)
        scores = np.clip(rng.normal(drift, 0.35, size=c), -1.0, 1.0)
        after_prev_close = rng.random(c) < 0.2
        secs = rng.integers(0, 16 * 3600, size=c)
        late = rng.integers(16 * 3600 + 1, 24 * 3600, size=c)
        prev = d - timedelta(days=1)
        for j in range(c):
            if after_prev_close[j]:
                ts = datetime.combine(prev, time()) + timedelta(seconds=int(late[j]))
            else:
                ts = datetime.combine(d, time()) + timedelta(seconds=int(secs[j]))
            rows_ts.append(ts.isoformat())
            rows_score.append(float(scores[j]))
        rows_sym.extend([path.symbol] * c)
    return pd.DataFrame({"symbol": rows_sym, "ts": rows_ts, "score": rows_score})


def black_scholes_forward(F: float, K: np.ndarray, T: float, r: float, sigma: float):
    """Discounted call and put prices on a forward."""
    sd = sigma * math.sqrt(T)
    d1 = (np.log(F / K) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    disc = math.exp(-r * T)
    call = disc * (F * norm.cdf(d1) - K * norm.cdf(d2))
    put = disc * (K * norm.cdf(-d2) - F * norm.cdf(-d1))
    return call, put


def chain_rows(spec: SyntheticSpec, path: StockPath, t: int, rng: np.random.Generator) -> list[tuple]:
    """Quotes for two expiries straddling 30 days under flat volatility iv[t]/100."""
    asof = path.dates[t].date()
    S = float(path.price[t])
    sigma = float(path.iv[t]) / 100.0
    r = spec.risk_free_rate
    near = 20 + t % 10
    rows = []
    for days in (near, near + 28):
        T = days / 365.0
        F = S * math.exp(r * T)
        width = 6.0 * sigma * math.sqrt(T)
        n_side = int(math.ceil(width / spec.chain_strike_step)) + 2
        K = np.round(S * (1.0 + spec.chain_strike_step * np.arange(-n_side, n_side + 1)), 2)
        K = np.unique(K[K > 0])
        call, put = black_scholes_forward(F, K, T, r, sigma)
        expiry = asof + timedelta(days=days)
        for right, px in (("call", call), ("put", put)):
            for k, p in zip(K, px):
                bid, ask = p * 0.98, p * 1.02
                if bid < 0.005:
                    bid, ask = 0.0, max(ask, 0.01)
                vol = int(rng.integers(0, 500))
                rows.append((path.symbol, asof.isoformat(), expiry.isoformat(), right, float(k), bid, ask, vol))
    return rows


def generate(spec: SyntheticSpec, out: str | Path) -> Path:
    """Write a complete bundle plus ``run.cfg`` pointing at it; returns ``out``."""
    spec.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(spec.seed)
    paths = []
    tweet_frames = []
    chain_out = []
    for i, ss in enumerate(root.spawn(spec.n_stocks)):
        rng_path, rng_tweet, rng_chain = (np.random.default_rng(s) for s in ss.spawn(3))
        p = simulate_stock(spec, i, rng_path)
        paths.append(p)
        tweet_frames.append(simulate_tweets(spec, p, rng_tweet))
        if spec.chain_days:
            picks = np.unique(np.linspace(0, spec.n_days - 1, spec.chain_days).round().astype(int))
            for t in picks:
                chain_out.extend(chain_rows(spec, p, int(t), rng_chain))

    order = np.argsort(spec.regime_means, kind="stable")
    rank = np.empty(spec.n_regimes, dtype=np.int64)
    rank[order] = np.arange(spec.n_regimes)
    names = REGIME_NAMES if spec.n_regimes == 4 else tuple(f"regime_{i}" for i in range(spec.n_regimes))

    def iso(dates):
        return dates.strftime("%Y-%m-%d")

    pd.concat(
        [pd.DataFrame({"symbol": p.symbol, "date": iso(p.dates), "adj_close": p.price}) for p in paths]
    ).to_csv(out / "prices.csv", index=False, lineterminator="\n")
    pd.concat([pd.DataFrame({"symbol": p.symbol, "date": iso(p.dates), "iv": p.iv}) for p in paths]).to_csv(
        out / "iv.csv", index=False, lineterminator="\n"
    )
    pd.concat(tweet_frames, ignore_index=True).to_csv(out / "scores.csv", index=False, lineterminator="\n")
    pd.DataFrame({"ticker": [p.symbol for p in paths], "sector": [p.sector for p in paths]}).to_csv(
        out / "universe.csv", index=False, lineterminator="\n"
    )
    liq_rng = np.random.default_rng(root.spawn(1)[0])
    pd.concat(
        [
            pd.DataFrame(
                {
                    "symbol": p.symbol,
                    "date": iso(p.dates),
                    "dollar_volume": p.liquidity * np.exp(liq_rng.normal(0, 0.25, len(p.dates))),
                }
            )
            for p in paths
        ]
    ).to_csv(out / "liquidity.csv", index=False, lineterminator="\n")
    pd.concat(
        [
            pd.DataFrame(
                {
                    "symbol": p.symbol,
                    "date": iso(p.dates),
                    "iv": p.iv,
                    "state": p.states,
                    "regime": [names[rank[s]] for s in p.states],
                    "signal": p.signal,
                    "label": p.labels,
                }
            )
            for p in paths
        ]
    ).to_csv(out / "truth.csv", index=False, lineterminator="\n")
    cols = ["symbol", "asof_date", "expiry_date", "right", "strike", "bid", "ask", "volume"]
    pd.DataFrame(chain_out, columns=cols).to_csv(out / "chains.csv", index=False, lineterminator="\n")
    pd.DataFrame({"date": [spec.start_date], "rate": [spec.risk_free_rate]}).to_csv(
        out / "rates.csv", index=False, lineterminator="\n"
    )
    write_kv(
        {
            "prices": "prices.csv",
            "iv": "iv.csv",
            "scores": "scores.csv",
            "universe": "universe.csv",
            "liquidity": "liquidity.csv",
            "seed": spec.seed,
            "hmm_train_end": iso(paths[0].dates[[min(503, spec.n_days - 1)]])[0],
        },
        out / "run.cfg",
        header="backtest inputs for this synthetic bundle; add grid/plan keys as needed",
    )
    return out
