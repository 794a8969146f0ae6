import json
import subprocess
import sys

import pandas as pd
import pytest

import desk_chain
from ivnowcast.cli import main
from ivnowcast.features import TWEET_FEATURES

FAST = """
n_trees = 5
max_depth = 3
min_samples_split = 20
min_samples_leaf = 8
initial_train = 300
test_window = 100
hmm_iter = 30
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.cfg"
    spec.write_text("n_stocks = 3\nn_days = 650\nchain_days = 3\nseed = 4\n")
    assert run("synth", "--spec", spec, "--out", root / "data") == 0
    cfg = root / "data" / "run.cfg"
    cfg.write_text(cfg.read_text() + FAST)
    return root


@pytest.fixture(scope="module")
def backtest(bundle):
    out = bundle / "bt"
    assert run("backtest", "--config", bundle / "data" / "run.cfg", "--out", out) == 0
    return out


def tree_bytes(path):
    return {p.relative_to(path): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------- iv


def test_iv_on_desk_chain(tmp_path):
    chains = desk_chain.write_csv(tmp_path / "chains.csv")
    rates = tmp_path / "rates.csv"
    rates.write_text(f"date,rate\n2024-01-01,{desk_chain.RATE}\n")
    assert run("iv", "--chains", chains, "--rates", rates, "--out", tmp_path / "iv.csv") == 0
    got = pd.read_csv(tmp_path / "iv.csv")
    assert list(got.columns) == ["symbol", "date", "iv"]
    assert got.loc[0, "iv"] == pytest.approx(desk_chain.hand_iv30()[0], rel=1e-10)


def test_iv_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("iv", "--chains", empty, "--out", tmp_path / "iv.csv") == 2
    assert "no expiries" in capsys.readouterr().err.lower()


def test_iv_malformed_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "symbol,asof_date,expiry_date,right,strike,bid,ask\n"
        "X,2024-01-02,2024-02-01,call,100,1.0,1.2\n"
        "X,2024-01-02,2024-02-01,put,abc,1.0,1.2\n"
    )
    assert run("iv", "--chains", bad, "--out", tmp_path / "iv.csv") == 2
    assert "bad.csv:3" in capsys.readouterr().err


def test_iv_unpriceable_chain_is_a_numeric_failure(tmp_path, capsys):
    bad = tmp_path / "flat.csv"
    bad.write_text(
        "symbol,asof_date,expiry_date,right,strike,bid,ask\n"
        "X,2024-01-02,2024-02-01,call,100,1.0,1.2\n"
        "X,2024-01-02,2024-02-01,put,100,1.0,1.2\n"
    )
    assert run("iv", "--chains", bad, "--out", tmp_path / "iv.csv") == 3
    assert run("iv", "--chains", bad, "--out", tmp_path / "iv.csv", "--skip-invalid") == 0


def test_iv_reproduces_generator(bundle, tmp_path):
    data = bundle / "data"
    assert run("iv", "--chains", data / "chains.csv", "--rates", data / "rates.csv", "--out", tmp_path / "iv.csv") == 0
    got = pd.read_csv(tmp_path / "iv.csv").merge(pd.read_csv(data / "truth.csv"), on=["symbol", "date"])
    assert len(got) == 9
    assert (got["iv_x"] - got["iv_y"]).abs().max() < 0.5


# ---------------------------------------------------------------- backtest


def test_backtest_report_has_seven_scenarios(backtest):
    summary = pd.read_csv(backtest / "scenario_summary.csv")
    assert summary["scenario"].tolist() == list(range(1, 8))
    assert summary["n_features"].tolist() == [2, 8, 3, 9, 6, 5, 11]
    for name in ("sector_summary", "regime_summary", "regime_stock", "regime_sector", "folds", "predictions"):
        assert (backtest / f"{name}.csv").exists()


def test_backtest_is_byte_identical(bundle, backtest):
    again = bundle / "bt_again"
    assert run("backtest", "--config", bundle / "data" / "run.cfg", "--out", again) == 0
    assert tree_bytes(backtest) == tree_bytes(again)


def test_seed_changes_dummy_only(bundle, backtest):
    other = bundle / "bt_seed"
    assert run("backtest", "--config", bundle / "data" / "run.cfg", "--out", other, "--seed", "99") == 0
    assert (other / "folds.csv").read_bytes() == (backtest / "folds.csv").read_bytes()
    assert tree_bytes(other / "matrices") == tree_bytes(backtest / "matrices")
    a = pd.read_csv(backtest / "predictions.csv")["dummy_score"]
    b = pd.read_csv(other / "predictions.csv")["dummy_score"]
    assert not a.equals(b)


def test_scenario_five_uses_only_tweet_features(bundle, tmp_path):
    out = tmp_path / "s5"
    cfg = bundle / "data" / "s5.cfg"  # relative paths resolve next to the config
    cfg.write_text((bundle / "data" / "run.cfg").read_text() + "scenarios = 5\nregime_scenario = 5\n")
    assert run("backtest", "--config", cfg, "--out", out) == 0
    meta = json.loads((out / "summary.json").read_text())["meta"]
    assert meta["scenario_columns"] == {"5": list(TWEET_FEATURES)}
    header = (out / "matrices" / "SYN000_S5.csv").read_text().splitlines()[0].split(",")
    assert header == ["date", *TWEET_FEATURES, "target"]


def test_regime_day_counts_partition_test_days(backtest):
    per = pd.read_csv(backtest / "regime_stock.csv").groupby("symbol")["days"].sum()
    preds = pd.read_csv(backtest / "predictions.csv")
    tests = preds[preds.scenario == 7].groupby("symbol").size()
    assert per.to_dict() == tests.to_dict()


def test_bad_config_lists_every_problem(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("prices = nowhere.csv\nscenarios = 0, 9\nn_trees = 0\n")
    assert run("backtest", "--config", cfg) == 2
    err = capsys.readouterr().err
    for key in ("prices", "scenarios", "n_trees", "iv or chains"):
        assert key in err


def test_featurize(bundle, tmp_path):
    out = tmp_path / "m"
    assert run("featurize", "--config", bundle / "data" / "run.cfg", "--scenarios", "1,7", "--out", out) == 0
    assert sorted(p.name for p in out.iterdir()) == [f"SYN00{i}_S{s}.csv" for i in range(3) for s in (1, 7)]


# ---------------------------------------------------------------- regimes, report, synth


def test_regimes_artifacts(bundle, tmp_path):
    iv = bundle / "data" / "iv.csv"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("regimes", "--iv", iv, "--train-end", "2012-03-01", "--out", a, "--iter", "40") == 0
    assert run("regimes", "--iv", iv, "--train-end", "2012-03-01", "--out", b, "--iter", "40") == 0
    assert tree_bytes(a) == tree_bytes(b)
    model = json.loads((a / "hmm_SYN000.json").read_text())
    assert len(model["means"]) == 4 and model["means"] == sorted(model["means"])
    reg = pd.read_csv(a / "regimes.csv")
    assert set(reg["regime"]) <= {"low", "medium", "high", "very_high"}


def test_regimes_train_end_before_series(bundle, tmp_path, capsys):
    assert run("regimes", "--iv", bundle / "data" / "iv.csv", "--train-end", "1999-01-01", "--out", tmp_path) == 2
    assert "observation" in capsys.readouterr().err


def test_report_recomputes_rollups(bundle, backtest, tmp_path):
    out = tmp_path / "rep"
    regimes = backtest / "regimes" / "regimes.csv"
    assert run("report", "--backtest", backtest, "--regimes", regimes, "--iv", bundle / "data" / "iv.csv", "--out", out) == 0
    assert (out / "regime_summary.csv").read_bytes() == (backtest / "regime_summary.csv").read_bytes()


def test_synth_rejects_bad_spec(tmp_path, capsys):
    spec = tmp_path / "s.cfg"
    spec.write_text("n_days = 1\n")
    assert run("synth", "--spec", spec, "--out", tmp_path / "x") == 2
    assert "n_days" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ivnowcast", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("iv", "featurize", "backtest", "regimes", "report", "synth"):
        assert cmd in r.stdout
