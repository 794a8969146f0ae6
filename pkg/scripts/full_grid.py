"""Full-size backtest: every scenario, the 64-config grid, 1000 trees per forest.

Expect hours on a single core. Point it at a real run config or let it generate
a synthetic bundle first.

    python scripts/full_grid.py --config data/run.cfg --out runs/full --threads 8
    python scripts/full_grid.py --synthetic --out runs/full_synth
"""

import argparse
import logging
import time
from pathlib import Path

from ivnowcast.cli import main as cli
from ivnowcast.config import RunConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path)
    src.add_argument("--synthetic", action="store_true", help="generate a 4-stock, 1300-day bundle first")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    cfg = args.config
    if args.synthetic:
        spec = args.out / "spec.cfg"
        spec.parent.mkdir(parents=True, exist_ok=True)
        spec.write_text("n_stocks = 4\nn_days = 1300\nsignal_strength = 0.2\nchain_days = 0\n")
        if cli(["synth", "--spec", str(spec), "--out", str(args.out / "data")]):
            raise SystemExit(2)
        cfg = args.out / "data" / "run.cfg"

    rc = RunConfig.from_file(cfg)
    logging.info("grid %d configs x %d trees, scenarios %s", len(rc.grid()), rc.n_trees, rc.scenarios)
    t0 = time.perf_counter()
    code = cli(
        ["backtest", "--config", str(cfg), "--out", str(args.out / "backtest"),
         "--threads", str(args.threads), "--seed", str(args.seed)]
    )
    logging.info("finished in %.1f min", (time.perf_counter() - t0) / 60)
    raise SystemExit(code)


if __name__ == "__main__":
    main()
