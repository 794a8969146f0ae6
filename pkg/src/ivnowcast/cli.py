"""``ivnowcast`` command line.

Exit codes: 0 success, 2 bad input or configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dataio, pipeline
from .config import ConfigError, RunConfig, int_list
from .evaluation import BacktestReport, InsufficientStocks, NotEnoughData
from .features import CalendarMismatch, SeriesTooShort
from .hmm import DegenerateModel, TooFewObservations, assign_regimes, fit_regime_model
from .ivindex import IvIndexError, NoExpiries, iv30
from .sentiment import UnknownSymbol
from .synth import SyntheticSpec, generate

log = logging.getLogger("ivnowcast")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

INPUT_ERRORS = (
    ConfigError,
    dataio.InputError,
    NoExpiries,
    UnknownSymbol,
    TooFewObservations,
    CalendarMismatch,
    SeriesTooShort,
    NotEnoughData,
    FileNotFoundError,
)
NUMERIC_ERRORS = (IvIndexError, DegenerateModel, InsufficientStocks, FloatingPointError, ArithmeticError)


def _config(args, **extra) -> RunConfig:
    overrides = dict(seed=args.seed, threads=args.threads, **extra)
    if args.config is None:
        raise ConfigError(["--config is required for this command"])
    return RunConfig.from_file(args.config, **overrides)


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def cmd_iv(args) -> None:
    rates = dataio.read_rates(args.rates) if args.rates else None
    snapshots = dataio.read_chains(args.chains, rates)
    if not snapshots:
        raise NoExpiries(f"{args.chains}: no option quotes, so no expiries to price")
    rows = []
    for snap in snapshots:
        try:
            rows.append((snap.symbol, snap.asof_date, iv30(snap).iv))
        except IvIndexError as exc:
            if not args.skip_invalid:
                raise type(exc)(f"{snap.symbol} {snap.asof_date}: {exc}") from None
            log.warning("skipping %s %s: %s", snap.symbol, snap.asof_date, exc)
    out = _out(args, "iv.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_iv(rows, out)


def cmd_featurize(args) -> None:
    cfg = _config(args, **({"scenarios": int_list(args.scenarios)} if args.scenarios else {}))
    bundle = pipeline.load_bundle(cfg)
    pipeline.write_matrices(bundle, cfg.scenarios, _out(args, "matrices"))


def cmd_backtest(args) -> None:
    cfg = _config(args)
    pipeline.run_backtest(cfg, _out(args, str(cfg.out or "backtest")))


def cmd_regimes(args) -> None:
    ivs = dataio.read_iv(args.iv)
    if not ivs:
        raise dataio.InputError(f"{args.iv}: no observations")
    seed = 42 if args.seed is None else args.seed
    models, paths = {}, {}
    for sym, series in ivs.items():
        models[sym] = fit_regime_model(series, args.train_end, args.states, args.iter, seed)
        paths[sym] = assign_regimes(models[sym], series, args.train_end)
    pipeline.write_regimes(models, paths, _out(args, "regimes"), args.train_end, ivs, args.states)


def cmd_report(args) -> None:
    report = BacktestReport.from_dir(args.backtest)
    regimes = dataio.regimes_from_csv(args.regimes) if args.regimes else None
    ivs = dataio.read_iv(args.iv) if args.iv else None
    out = _out(args, args.backtest)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_rollups(report, regimes, out, args.scenario, ivs)


def cmd_synth(args) -> None:
    spec = SyntheticSpec.from_file(args.spec) if args.spec else SyntheticSpec()
    if args.seed is not None:
        spec.seed = args.seed
    generate(spec, _out(args, "synthetic"))


def _global_flags(default) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--config", type=Path, help="key = value run configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", type=Path, help="output file or directory")
    p.add_argument("--threads", type=int, help="worker processes for model fitting")
    p.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivnowcast", description=__doc__.splitlines()[0], parents=[_global_flags(None)]
    )
    # flags repeated after the subcommand must not reset values given before it
    common = _global_flags(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iv", parents=[common], help="30-day implied volatility from option chains")
    p.add_argument("--chains", type=Path, required=True)
    p.add_argument("--rates", type=Path)
    p.add_argument("--skip-invalid", action="store_true", help="skip snapshots that cannot be priced")
    p.set_defaults(func=cmd_iv)

    p = sub.add_parser("featurize", parents=[common], help="write per-stock scenario feature matrices")
    p.add_argument("--scenarios", help="comma separated subset of 1..7")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("backtest", parents=[common], help="walk-forward ablation over the forest grid")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("regimes", parents=[common], help="fit per-stock Gaussian HMM regimes")
    p.add_argument("--iv", type=Path, required=True)
    p.add_argument("--train-end", required=True)
    p.add_argument("--states", type=int, default=4)
    p.add_argument("--iter", type=int, default=100)
    p.set_defaults(func=cmd_regimes)

    p = sub.add_parser("report", parents=[common], help="regime and liquidity rollups from a backtest")
    p.add_argument("--backtest", type=Path, required=True)
    p.add_argument("--regimes", type=Path)
    p.add_argument("--iv", type=Path, help="IV series for per-regime mean IV")
    p.add_argument("--scenario", type=int, default=7)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic data bundle")
    p.add_argument("--spec", type=Path)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
