"""Walk-forward backtests, AUC scoring and report assembly."""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats
from scipy.stats import rankdata

from .features import SCENARIO_SOURCES, FeatureMatrix, build_matrix, scenario_columns
from .forest import ForestConfig, fit_forest
from .hmm import REGIME_NAMES, RegimePath, regime_name

log = logging.getLogger(__name__)


class NotEnoughData(ValueError):
    pass


class SingleClass(ValueError):
    """AUC is undefined when the labels contain only one class."""


class InsufficientStocks(ValueError):
    pass


# --------------------------------------------------------------------------- plan


@dataclass(frozen=True)
class Fold:
    index: int
    train_start: int
    train_stop: int  # exclusive
    test_start: int
    test_stop: int  # exclusive

    @property
    def train(self) -> slice:
        return slice(self.train_start, self.train_stop)

    @property
    def test(self) -> slice:
        return slice(self.test_start, self.test_stop)

    @property
    def n_test(self) -> int:
        return self.test_stop - self.test_start


@dataclass(frozen=True)
class WalkForwardPlan:
    n_days: int
    initial_train: int
    test_window: int
    step: int
    folds: tuple[Fold, ...]

    def __len__(self):
        return len(self.folds)

    def check(self):
        for f in self.folds:
            if not f.train_stop <= f.test_start:
                raise AssertionError(f"fold {f.index}: train overlaps test")
            if f.test_stop > self.n_days or f.n_test < 1:
                raise AssertionError(f"fold {f.index}: bad test span")
        starts = [f.test_start for f in self.folds]
        if starts != sorted(starts):
            raise AssertionError("folds are not temporally ordered")


def make_plan(n_days: int, initial_train: int = 504, test_window: int = 40, step: int | None = None) -> WalkForwardPlan:
    """Expanding-window folds: fold i trains on [0, t + i*step) and tests on the next k days.

    The last fold may be shorter than ``test_window``; it is kept as long as
    it holds at least one test day.
    """
    step = test_window if step is None else step
    if initial_train < 1 or test_window < 1 or step < 1:
        raise ValueError("initial_train, test_window and step must be positive")
    if n_days <= initial_train:
        raise NotEnoughData(f"{n_days} day(s) available, initial training window needs {initial_train} + 1")
    folds = []
    start = initial_train
    while start < n_days:
        folds.append(Fold(len(folds), 0, start, start, min(start + test_window, n_days)))
        start += step
    plan = WalkForwardPlan(n_days, initial_train, test_window, step, tuple(folds))
    plan.check()
    return plan


# --------------------------------------------------------------------------- scoring


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"{n_pos} positive / {n_neg} negative label(s)")
    r = rankdata(s)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_or_nan(scores, labels) -> float:
    try:
        return auc(scores, labels)
    except SingleClass:
        return math.nan


def stratified_dummy(train_labels, test_size: int, seed) -> np.ndarray:
    """Label-independent 0/1 scores drawn at the training positive rate.

    Test labels are deliberately not a parameter.
    """
    y = np.asarray(train_labels)
    if y.size == 0:
        raise ValueError("no training labels")
    p = float((y == 1).mean())
    rng = np.random.default_rng(seed)
    return (rng.random(test_size) < p).astype(float)


def dummy_is_degenerate(train_labels) -> bool:
    """A single-class training fold gives constant dummy scores and no usable AUC."""
    y = np.asarray(train_labels)
    return bool(y.size == 0 or np.all(y == 1) or np.all(y != 1))


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    return float(v.mean()) if v.size else math.nan


def _stable_key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def dummy_seed(seed: int, symbol: str, fold: int) -> list[int]:
    return [seed, _stable_key(symbol), fold]


# --------------------------------------------------------------------------- backtests


@dataclass
class StockData:
    symbol: str
    price: pd.Series
    iv: pd.Series
    social: pd.DataFrame | None = None
    sector: str = ""
    liquidity: float | None = None


@dataclass
class FoldResult:
    scenario: int
    config_id: str
    fold: int
    scores: np.ndarray
    labels: np.ndarray
    auc: float  # nan when the fold's labels are single-class


def walk_forward(
    matrix: FeatureMatrix,
    plan: WalkForwardPlan,
    config: ForestConfig,
    n_jobs: int = 1,
    labels: np.ndarray | None = None,
) -> list[FoldResult]:
    """Fit on each fold's training rows and score its test rows."""
    y = matrix.y if labels is None else np.asarray(labels)
    out = []
    for f in plan.folds:
        forest = fit_forest(matrix.X[f.train], y[f.train], config, matrix.columns, n_jobs=n_jobs)
        scores = forest.predict_proba(matrix.X[f.test])
        out.append(FoldResult(matrix.scenario, config.config_id, f.index, scores, y[f.test], auc_or_nan(scores, y[f.test])))
    return out


def pooled_auc(results: Sequence[FoldResult]) -> float:
    return auc_or_nan(
        np.concatenate([r.scores for r in results]),
        np.concatenate([r.labels for r in results]),
    )


@dataclass
class BacktestReport:
    stock_scenarios: pd.DataFrame
    grid: pd.DataFrame
    folds: pd.DataFrame
    predictions: pd.DataFrame
    meta: dict = field(default_factory=dict)
    stocks: pd.DataFrame | None = None  # symbol, sector, liquidity, median_daily_tweets

    def scenario_summary(self) -> pd.DataFrame:
        """Median AUC / dummy / improvement across stocks per scenario."""
        g = self.stock_scenarios.groupby("scenario")
        out = pd.DataFrame(
            {
                "n_features": g["n_features"].first(),
                "n_stocks": g["auc"].count(),
                "median_auc": g["auc"].median(),
                "median_dummy_auc": g["dummy_auc"].median(),
                "median_improvement": g["improvement"].median(),
                "stocks_beating_dummy": g["improvement"].apply(lambda s: int((s > 0).sum())),
            }
        )
        return out.reset_index()

    def sector_summary(self, scenario: int = 7) -> pd.DataFrame:
        rows = self.stock_scenarios[self.stock_scenarios["scenario"] == scenario]
        g = rows.groupby("sector")["improvement"]
        return pd.DataFrame(
            {
                "n_stocks": g.count(),
                "median_improvement": g.median(),
                "q1": g.quantile(0.25),
                "q3": g.quantile(0.75),
                "min": g.min(),
                "max": g.max(),
            }
        ).reset_index()

    def to_dir(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        self.stock_scenarios.to_csv(out / "stock_scenarios.csv", index=False)
        self.grid.to_csv(out / "grid.csv", index=False)
        self.folds.to_csv(out / "folds.csv", index=False)
        self.predictions.to_csv(out / "predictions.csv", index=False)
        self.scenario_summary().to_csv(out / "scenario_summary.csv", index=False)
        if self.stocks is not None:
            self.stocks.to_csv(out / "stocks.csv", index=False)
        sectors = [self.sector_summary(s).assign(scenario=s) for s in sorted(self.stock_scenarios["scenario"].unique())]
        pd.concat(sectors, ignore_index=True).to_csv(out / "sector_summary.csv", index=False)
        ss = self.stock_scenarios
        ss[["scenario", "sector", "symbol", "improvement"]].sort_values(["scenario", "sector", "symbol"]).to_csv(
            out / "sector_improvement.csv", index=False
        )
        summary = {
            "meta": self.meta,
            "scenarios": _records(self.scenario_summary()),
            "stocks": _records(self.stock_scenarios),
            "grid": _records(self.grid),
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_dir(cls, path: str | Path) -> "BacktestReport":
        path = Path(path)
        meta = json.loads((path / "summary.json").read_text())["meta"]
        stocks = path / "stocks.csv"
        preds = pd.read_csv(path / "predictions.csv", parse_dates=["date"])
        return cls(
            stock_scenarios=pd.read_csv(path / "stock_scenarios.csv", keep_default_na=False, na_values=[""]),
            grid=pd.read_csv(path / "grid.csv"),
            folds=pd.read_csv(path / "folds.csv"),
            predictions=preds,
            meta=meta,
            stocks=pd.read_csv(stocks, keep_default_na=False, na_values=[""]) if stocks.exists() else None,
        )


def _records(df: pd.DataFrame) -> list[dict]:
    recs = []
    for row in df.to_dict(orient="records"):
        clean = {}
        for k, v in row.items():
            if isinstance(v, (np.integer,)):
                v = int(v)
            elif isinstance(v, (float, np.floating)):
                v = None if math.isnan(v) else float(v)
            clean[str(k)] = v
        recs.append(clean)
    return recs


def _stock_matrices(stock: StockData, scenarios: Iterable[int]) -> dict[int, FeatureMatrix]:
    mats = {}
    for sc in scenarios:
        social = stock.social if "tweets" in SCENARIO_SOURCES[sc] else None
        mats[sc] = build_matrix(stock.price, stock.iv, social, sc, stock.symbol)
    dates = {tuple(m.dates) for m in mats.values()}
    if len(dates) != 1:
        raise ValueError(f"{stock.symbol}: scenarios disagree on labeled days")
    return mats


def run_ablation(
    bundle: Sequence[StockData],
    scenarios: Sequence[int] = tuple(range(1, 8)),
    grid: Sequence[ForestConfig] | None = None,
    initial_train: int = 504,
    test_window: int = 40,
    step: int | None = None,
    seed: int = 42,
    n_jobs: int = 1,
) -> BacktestReport:
    """Walk-forward every (stock, scenario, config) and pick each stock's best config.

    The reported scenario AUC per stock is the configuration with the highest
    mean fold AUC (first in grid order on ties); every configuration's fold
    AUCs are kept in ``report.grid``. The stratified dummy is scored on the
    same folds, with streams keyed on (seed, symbol, fold).
    """
    if grid is None:
        from .forest import config_grid

        grid = config_grid(seed=seed)
    scenarios = sorted(set(scenarios))
    ss_rows, grid_rows, fold_rows, pred_frames, stock_rows = [], [], [], [], []

    for stock in sorted(bundle, key=lambda s: s.symbol):
        mats = _stock_matrices(stock, scenarios)
        ref = mats[scenarios[0]]
        plan = make_plan(len(ref), initial_train, test_window, step)
        y = ref.y
        dummy = {}
        for f in plan.folds:
            dummy[f.index] = stratified_dummy(y[f.train], f.n_test, dummy_seed(seed, stock.symbol, f.index))
            fold_rows.append(
                {
                    "symbol": stock.symbol,
                    "fold": f.index,
                    "train_start": ref.dates[f.train_start].date().isoformat(),
                    "train_end": ref.dates[f.train_stop - 1].date().isoformat(),
                    "test_start": ref.dates[f.test_start].date().isoformat(),
                    "test_end": ref.dates[f.test_stop - 1].date().isoformat(),
                    "n_train": f.train_stop - f.train_start,
                    "n_test": f.n_test,
                }
            )
        degenerate = np.array([dummy_is_degenerate(y[f.train]) for f in plan.folds])
        if degenerate.any():
            log.warning("%s: %d fold(s) with a single-class training prior", stock.symbol, int(degenerate.sum()))
        dummy_fold_auc = np.array(
            [math.nan if bad else auc_or_nan(dummy[f.index], y[f.test]) for f, bad in zip(plan.folds, degenerate)]
        )
        dummy_all = np.concatenate([dummy[f.index] for f in plan.folds])
        test_idx = np.concatenate([np.arange(f.test_start, f.test_stop) for f in plan.folds])
        fold_of = np.concatenate([np.full(f.n_test, f.index) for f in plan.folds])

        for sc in scenarios:
            m = mats[sc]
            best = None
            for cfg in grid:
                log.info("%s S%d %s: %d folds", stock.symbol, sc, cfg.config_id, len(plan))
                res = walk_forward(m, plan, cfg, n_jobs=n_jobs)
                fold_auc = np.array([r.auc for r in res])
                mean_auc = _nanmean(fold_auc)
                grid_rows.append(
                    {
                        "symbol": stock.symbol,
                        "scenario": sc,
                        "config_id": cfg.config_id,
                        "n_trees": cfg.n_trees,
                        "max_depth": cfg.max_depth,
                        "min_samples_split": cfg.min_samples_split,
                        "min_samples_leaf": cfg.min_samples_leaf,
                        "mean_auc": mean_auc,
                        "n_valid_folds": int((~np.isnan(fold_auc)).sum()),
                        "fold_aucs": ";".join("nan" if math.isnan(a) else repr(float(a)) for a in fold_auc),
                    }
                )
                if best is None or (not math.isnan(mean_auc) and (math.isnan(best[1]) or mean_auc > best[1])):
                    best = (cfg, mean_auc, res, fold_auc)
            cfg, mean_auc, res, fold_auc = best
            valid = ~np.isnan(fold_auc)
            dummy_auc = _nanmean(dummy_fold_auc[valid])
            scores = np.concatenate([r.scores for r in res])
            ss_rows.append(
                {
                    "symbol": stock.symbol,
                    "sector": stock.sector,
                    "scenario": sc,
                    "n_features": len(m.columns),
                    "best_config": cfg.config_id,
                    "auc": mean_auc,
                    "dummy_auc": dummy_auc,
                    "improvement": mean_auc - dummy_auc,
                    "pooled_auc": auc_or_nan(scores, y[test_idx]),
                    "pooled_dummy_auc": auc_or_nan(dummy_all, y[test_idx]),
                    "n_folds": len(plan),
                    "n_valid_folds": int(valid.sum()),
                    "n_degenerate_dummy_folds": int(degenerate.sum()),
                }
            )
            pred_frames.append(
                pd.DataFrame(
                    {
                        "symbol": stock.symbol,
                        "scenario": sc,
                        "date": m.dates[test_idx],
                        "fold": fold_of,
                        "label": y[test_idx].astype(int),
                        "score": scores,
                        "dummy_score": dummy_all,
                    }
                )
            )
        social = stock.social
        stock_rows.append(
            {
                "symbol": stock.symbol,
                "sector": stock.sector,
                "liquidity": math.nan if stock.liquidity is None else float(stock.liquidity),
                "median_daily_tweets": math.nan if social is None else float(social["tweet_count"].median()),
                "mean_iv": float(stock.iv.mean()),
            }
        )

    meta = {
        "seed": seed,
        "scenarios": scenarios,
        "initial_train": initial_train,
        "test_window": test_window,
        "step": test_window if step is None else step,
        "configs": [c.config_id for c in grid],
        "n_trees": sorted({c.n_trees for c in grid}),
        "scenario_columns": {str(s): list(scenario_columns(s)) for s in scenarios},
    }
    return BacktestReport(
        stock_scenarios=pd.DataFrame(ss_rows),
        grid=pd.DataFrame(grid_rows),
        folds=pd.DataFrame(fold_rows),
        predictions=pd.concat(pred_frames, ignore_index=True),
        meta=meta,
        stocks=pd.DataFrame(stock_rows),
    )


# --------------------------------------------------------------------------- regimes


@dataclass
class RegimeReport:
    per_stock: pd.DataFrame
    overall: pd.DataFrame
    by_sector: pd.DataFrame

    def to_dir(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        self.per_stock.to_csv(out / "regime_stock.csv", index=False)
        self.overall.to_csv(out / "regime_summary.csv", index=False)
        self.by_sector.to_csv(out / "regime_sector.csv", index=False)


def regime_frame(paths: Mapping[str, RegimePath], n_states: int = 4) -> pd.DataFrame:
    frames = [p.to_frame(sym, n_states) for sym, p in sorted(paths.items())]
    df = pd.concat(frames, ignore_index=True)
    df["date"] = pd.to_datetime(df["date"])
    return df


def regime_report(
    report: BacktestReport,
    regimes: pd.DataFrame | Mapping[str, RegimePath],
    scenario: int = 7,
    iv: Mapping[str, pd.Series] | None = None,
) -> RegimeReport:
    """Group each stock's test days by decoded regime and score them per regime.

    ``regimes`` is either a mapping of RegimePaths or a frame with
    ``symbol, date, regime`` columns.
    """
    if not isinstance(regimes, pd.DataFrame):
        regimes = regime_frame(regimes)
    names = list(REGIME_NAMES)
    extra = sorted(set(regimes["regime"]) - set(names))
    names += extra
    preds = report.predictions[report.predictions["scenario"] == scenario]
    if preds.empty:
        raise ValueError(f"report has no predictions for scenario {scenario}")
    sectors = dict(zip(report.stock_scenarios["symbol"], report.stock_scenarios["sector"]))
    rows = []
    reg = regimes[["symbol", "date", "regime"]].copy()
    reg["date"] = pd.to_datetime(reg["date"])
    merged = preds.merge(reg, on=["symbol", "date"], how="left")
    for sym, g in merged.groupby("symbol", sort=True):
        if g["regime"].isna().any():
            missing = g.loc[g["regime"].isna(), "date"].min()
            raise ValueError(f"{sym}: regime path does not cover test day {missing.date()}")
        ivs = None if iv is None or sym not in iv else iv[sym]
        for name in names:
            part = g[g["regime"] == name]
            model_auc = auc_or_nan(part["score"], part["label"]) if len(part) else math.nan
            dummy_auc = auc_or_nan(part["dummy_score"], part["label"]) if len(part) else math.nan
            mean_iv = math.nan
            if ivs is not None and len(part):
                mean_iv = float(ivs.reindex(pd.DatetimeIndex(part["date"])).mean())
            rows.append(
                {
                    "symbol": sym,
                    "sector": sectors.get(sym, ""),
                    "regime": name,
                    "days": int(len(part)),
                    "mean_iv": mean_iv,
                    "auc": model_auc,
                    "dummy_auc": dummy_auc,
                    "improvement": model_auc - dummy_auc,
                    "defined": not math.isnan(model_auc),
                }
            )
    per_stock = pd.DataFrame(rows)
    order = {n: i for i, n in enumerate(names)}
    g = per_stock.groupby("regime")
    overall = pd.DataFrame(
        {
            "median_days": g["days"].median(),
            "total_days": g["days"].sum(),
            "median_iv": g["mean_iv"].median(),
            "median_dummy_auc": g["dummy_auc"].median(),
            "median_auc": g["auc"].median(),
            "median_improvement": g["improvement"].median(),
            "n_defined": g["defined"].sum(),
        }
    ).reset_index()
    overall = overall.sort_values("regime", key=lambda s: s.map(order)).reset_index(drop=True)
    by_sector = (
        per_stock.pivot_table(index="sector", columns="regime", values="improvement", aggfunc="median")
        .reindex(columns=[n for n in names if n in set(per_stock["regime"])])
        .reset_index()
    )
    by_sector.columns.name = None
    return RegimeReport(per_stock, overall, by_sector)


# --------------------------------------------------------------------------- liquidity / attention


def _corr(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pr = stats.pearsonr(x, y)
    sr = stats.spearmanr(x, y)
    return {
        "pearson": float(pr.statistic),
        "pearson_p": float(pr.pvalue),
        "spearman": float(sr.statistic),
        "spearman_p": float(sr.pvalue),
        "n": int(len(x)),
    }


def liquidity_attention_stats(table: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Correlations for (liquidity, improvement) and (tweets, liquidity), plus sector medians.

    ``table`` needs ``symbol, sector, liquidity, median_daily_tweets, improvement``.
    """
    df = table.dropna(subset=["liquidity", "median_daily_tweets", "improvement"])
    if len(df) < 3:
        raise InsufficientStocks(f"need at least 3 stocks with liquidity, tweets and improvement; have {len(df)}")
    corr = pd.DataFrame(
        [
            {"x": "liquidity", "y": "improvement", **_corr(df["liquidity"], df["improvement"])},
            {"x": "median_daily_tweets", "y": "liquidity", **_corr(df["median_daily_tweets"], df["liquidity"])},
        ]
    )
    g = df.groupby("sector")
    sectors = pd.DataFrame(
        {
            "n_stocks": g["symbol"].count(),
            "median_liquidity": g["liquidity"].median(),
            "median_daily_tweets": g["median_daily_tweets"].median(),
            "median_improvement": g["improvement"].median(),
        }
    ).reset_index()
    return corr, sectors


def liquidity_table(report: BacktestReport, scenario: int = 7) -> pd.DataFrame:
    if report.stocks is None:
        raise ValueError("report carries no per-stock liquidity/tweet data")
    imp = report.stock_scenarios[report.stock_scenarios["scenario"] == scenario][["symbol", "improvement"]]
    return report.stocks.merge(imp, on="symbol", how="inner")
