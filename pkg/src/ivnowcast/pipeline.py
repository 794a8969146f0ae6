"""Glue between on-disk inputs and the modelling modules."""

from __future__ import annotations

import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import dataio
from .config import RunConfig
from .evaluation import (
    BacktestReport,
    InsufficientStocks,
    StockData,
    liquidity_attention_stats,
    liquidity_table,
    regime_frame,
    regime_report,
    run_ablation,
)
from .features import build_matrix
from .hmm import assign_regimes, fit_regime_model, save_model
from .ivindex import iv30, option_dollar_volume
from .sentiment import LexiconScorer, aggregate_daily, load_lexicon

log = logging.getLogger(__name__)


def iv_from_chains(chains_path, rates_path=None) -> tuple[dict[str, pd.Series], dict[str, float]]:
    """IV series and mean daily option dollar volume per symbol."""
    rates = dataio.read_rates(rates_path) if rates_path else None
    iv: dict[str, dict] = defaultdict(dict)
    dollar: dict[str, list[float]] = defaultdict(list)
    for snap in dataio.read_chains(chains_path, rates):
        iv[snap.symbol][pd.Timestamp(snap.asof_date)] = iv30(snap).iv
        dollar[snap.symbol].append(option_dollar_volume(snap))
    series = {s: pd.Series(v, dtype=float, name="iv").sort_index() for s, v in sorted(iv.items())}
    return series, {s: float(np.mean(v)) for s, v in dollar.items()}


def load_social(cfg: RunConfig, prices: dict[str, pd.Series]) -> dict[str, pd.DataFrame] | None:
    if cfg.scores is None and cfg.tweets is None:
        return None
    calendar = sorted({d.date() for s in prices.values() for d in s.index})
    if cfg.scores is not None:
        records, scorer = dataio.read_scores(cfg.scores), None
    else:
        records, scorer = dataio.read_tweets_jsonl(cfg.tweets), LexiconScorer(load_lexicon(cfg.lexicon))
    daily = aggregate_daily(records, calendar, scorer, universe=prices.keys())
    return {sym: dataio.social_frame(stats) for sym, stats in daily.items()}


def load_bundle(cfg: RunConfig) -> list[StockData]:
    prices = dataio.read_prices(cfg.prices)
    liquidity: dict[str, float] = {}
    if cfg.iv is not None:
        iv = dataio.read_iv(cfg.iv)
    else:
        iv, liquidity = iv_from_chains(cfg.chains, cfg.rates)
    if cfg.liquidity is not None:
        liquidity = dataio.read_liquidity(cfg.liquidity)
    universe = dataio.read_universe(cfg.universe)
    social = load_social(cfg, prices)
    missing = sorted(set(prices) - set(iv))
    if missing:
        raise dataio.InputError(f"no implied volatility for: {', '.join(missing)}")
    return [
        StockData(
            symbol=sym,
            price=prices[sym],
            iv=iv[sym],
            social=None if social is None else social[sym],
            sector=universe.get(sym, ""),
            liquidity=liquidity.get(sym),
        )
        for sym in sorted(prices)
    ]


def fit_regimes(bundle, train_end, n_states=4, n_iter=100, seed=42):
    models, paths = {}, {}
    for stock in bundle:
        model = fit_regime_model(stock.iv, train_end, n_states, n_iter, seed)
        models[stock.symbol] = model
        paths[stock.symbol] = assign_regimes(model, stock.iv, train_end)
    return models, paths


def write_regimes(models, paths, out: Path, train_end, ivs=None, n_states=4) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for sym, model in sorted(models.items()):
        start = None if ivs is None else ivs[sym].index.min()
        save_model(model, out / f"hmm_{sym}.json", start, train_end)
    regime_frame(paths, n_states).assign(date=lambda d: d["date"].dt.strftime("%Y-%m-%d")).to_csv(
        out / "regimes.csv", index=False, lineterminator="\n"
    )


def write_matrices(bundle, scenarios, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for stock in bundle:
        for sc in scenarios:
            m = build_matrix(stock.price, stock.iv, stock.social, sc, stock.symbol)
            dataio.write_matrix(m, out / f"{stock.symbol}_S{sc}.csv")


def write_rollups(report: BacktestReport, regimes, out: Path, scenario: int, ivs=None) -> None:
    if regimes is not None and scenario in report.meta["scenarios"]:
        regime_report(report, regimes, scenario, ivs).to_dir(out)
    if report.stocks is not None:
        try:
            corr, sectors = liquidity_attention_stats(liquidity_table(report, scenario))
        except (InsufficientStocks, KeyError, ValueError) as exc:
            log.warning("liquidity/attention statistics skipped: %s", exc)
        else:
            corr.to_csv(out / "liquidity_correlations.csv", index=False)
            sectors.to_csv(out / "liquidity_sectors.csv", index=False)


def run_backtest(cfg: RunConfig, out: Path) -> BacktestReport:
    bundle = load_bundle(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_matrices(bundle, cfg.scenarios, out / "matrices")
    report = run_ablation(
        bundle,
        cfg.scenarios,
        cfg.grid(),
        cfg.initial_train,
        cfg.test_window,
        cfg.step,
        cfg.seed,
        cfg.threads,
    )
    report.to_dir(out)
    ivs = {s.symbol: s.iv for s in bundle}
    regimes = None
    if cfg.regimes is not None:
        regimes = dataio.regimes_from_csv(cfg.regimes)
    elif cfg.hmm_train_end:
        models, paths = fit_regimes(bundle, cfg.hmm_train_end, cfg.hmm_states, cfg.hmm_iter, cfg.regime_seed)
        write_regimes(models, paths, out / "regimes", cfg.hmm_train_end, ivs, cfg.hmm_states)
        regimes = regime_frame(paths, cfg.hmm_states)
    write_rollups(report, regimes, out, cfg.regime_scenario, ivs)
    return report
