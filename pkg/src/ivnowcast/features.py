"""Daily feature matrix and next-day IV direction target.

Per source, the level (except price, which is non-stationary), its first
difference and its deviation from a 10-day EMA. Seven ablation scenarios
combine the sources.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

EMA_SPAN = 10

PRICE_FEATURES = ("price_diff", "price_ema_dev")
IV_FEATURES = ("iv_level", "iv_diff", "iv_ema_dev")
TWEET_FEATURES = (
    "tweet_count",
    "count_diff",
    "count_ema_dev",
    "polarity",
    "polarity_diff",
    "polarity_ema_dev",
)
ALL_FEATURES = PRICE_FEATURES + IV_FEATURES + TWEET_FEATURES

SCENARIO_SOURCES = {
    1: ("price",),
    2: ("price", "tweets"),
    3: ("iv",),
    4: ("iv", "tweets"),
    5: ("tweets",),
    6: ("price", "iv"),
    7: ("price", "iv", "tweets"),
}
_SOURCE_COLUMNS = {"price": PRICE_FEATURES, "iv": IV_FEATURES, "tweets": TWEET_FEATURES}


class SeriesTooShort(ValueError):
    pass


class CalendarMismatch(ValueError):
    pass


def scenario_columns(scenario: int) -> tuple[str, ...]:
    if scenario not in SCENARIO_SOURCES:
        raise ValueError(f"scenario must be one of 1..7, got {scenario}")
    return tuple(c for src in SCENARIO_SOURCES[scenario] for c in _SOURCE_COLUMNS[src])


def ema(values, span: int = EMA_SPAN) -> np.ndarray:
    """Recursive EMA, alpha = 2/(span+1), seeded with the first observation."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("ema of an empty series")
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(x)
    acc = x[0]
    for i, v in enumerate(x):
        acc = acc + alpha * (v - acc) if i else v
        out[i] = acc
    return out


def first_diff(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise SeriesTooShort("first difference needs at least 2 observations")
    return x[1:] - x[:-1]


def label_targets(iv) -> np.ndarray:
    """y_t = 1 if iv_{t+1} > iv_t else 0; the last day gets no label."""
    x = np.asarray(iv, dtype=float)
    if x.size < 2:
        raise SeriesTooShort("targets need at least 2 observations")
    return (x[1:] - x[:-1] > 0).astype(np.int8)


def _derived(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = np.empty_like(x)
    diff[0] = np.nan
    diff[1:] = first_diff(x)
    return diff, x - ema(x)


@dataclass
class FeatureMatrix:
    """Temporally ordered, labeled rows for one stock and one scenario."""

    symbol: str
    scenario: int
    dates: pd.DatetimeIndex
    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]

    def __len__(self):
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.columns), index=self.dates)
        df.index.name = "date"
        df["target"] = self.y
        return df


def _align(name: str, series: pd.Series | pd.DataFrame, calendar: pd.DatetimeIndex):
    series = series.sort_index()
    aligned = series.reindex(calendar)
    missing = aligned.isna()
    if isinstance(missing, pd.DataFrame):
        missing = missing.any(axis=1)
    if missing.any():
        first = calendar[np.argmax(missing.to_numpy())]
        raise CalendarMismatch(
            f"{name} has no value on {int(missing.sum())} trading day(s), first {first.date()}"
        )
    return aligned


def feature_table(
    price: pd.Series,
    iv: pd.Series | None = None,
    social: pd.DataFrame | None = None,
) -> pd.DataFrame:
    """All available feature columns plus target on the price calendar (unfiltered).

    ``social`` needs ``tweet_count`` and ``mean_polarity`` columns. Rows
    keep NaNs where history is missing; ``build_matrix`` drops them.
    """
    price = price.sort_index()
    cal = pd.DatetimeIndex(price.index)
    if cal.has_duplicates:
        raise CalendarMismatch("duplicate dates in price series")
    out = pd.DataFrame(index=cal)
    p = price.to_numpy(dtype=float)
    out["price_diff"], out["price_ema_dev"] = _derived(p)
    target = np.full(len(cal), np.nan)
    if iv is not None:
        v = _align("iv", iv, cal).to_numpy(dtype=float)
        out["iv_level"] = v
        out["iv_diff"], out["iv_ema_dev"] = _derived(v)
        if len(v) >= 2:
            target[:-1] = label_targets(v)
    if social is not None:
        s = _align("social", social[["tweet_count", "mean_polarity"]], cal)
        c = s["tweet_count"].to_numpy(dtype=float)
        pol = s["mean_polarity"].to_numpy(dtype=float)
        out["tweet_count"] = c
        out["count_diff"], out["count_ema_dev"] = _derived(c)
        out["polarity"] = pol
        out["polarity_diff"], out["polarity_ema_dev"] = _derived(pol)
    out["target"] = target
    return out


def build_matrix(
    price: pd.Series,
    iv: pd.Series,
    social: pd.DataFrame | None,
    scenario: int,
    symbol: str = "",
) -> FeatureMatrix:
    cols = scenario_columns(scenario)
    needs_social = "tweets" in SCENARIO_SOURCES[scenario]
    if needs_social and social is None:
        raise ValueError(f"scenario {scenario} needs tweet statistics")
    table = feature_table(price, iv, social if needs_social else None)
    table = table[list(cols) + ["target"]].dropna()
    return FeatureMatrix(
        symbol=symbol,
        scenario=scenario,
        dates=pd.DatetimeIndex(table.index),
        X=table[list(cols)].to_numpy(dtype=float),
        y=table["target"].to_numpy(dtype=np.int8),
        columns=cols,
    )
