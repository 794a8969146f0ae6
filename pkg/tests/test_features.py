import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivnowcast.features import (
    ALL_FEATURES,
    TWEET_FEATURES,
    CalendarMismatch,
    SeriesTooShort,
    build_matrix,
    ema,
    feature_table,
    first_diff,
    label_targets,
    scenario_columns,
)

SCENARIO_COUNTS = {1: 2, 2: 8, 3: 3, 4: 9, 5: 6, 6: 5, 7: 11}


def test_ema_of_constant():
    assert np.array_equal(ema([4.2] * 20), np.full(20, 4.2))


def test_ema_one_step():
    assert ema([1.0, 2.0])[1] == pytest.approx(13 / 11, rel=1e-15)


def test_ema_impulse():
    assert ema([0.0] * 10 + [11.0])[-1] == pytest.approx(2.0, rel=1e-15)


def test_ema_matches_pandas_recursive_form():
    x = np.random.default_rng(0).normal(size=50)
    ref = pd.Series(x).ewm(span=10, adjust=False).mean().to_numpy()
    assert np.allclose(ema(x), ref, rtol=0, atol=1e-12)


def test_first_diff():
    assert np.array_equal(first_diff([3.0] * 5), np.zeros(4))
    assert np.array_equal(first_diff([1, 4, 2]), [3, -2])
    assert np.allclose(first_diff(np.arange(10) * 0.7 + 2), 0.7)
    with pytest.raises(SeriesTooShort):
        first_diff([1.0])


def test_labels():
    assert label_targets([20, 21, 21, 19]).tolist() == [1, 0, 0]
    assert label_targets(np.arange(6.0)).tolist() == [1] * 5
    assert label_targets(-np.arange(6.0)).tolist() == [0] * 5


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=50))
def test_label_sum_counts_strict_up_moves(steps):
    iv = np.cumsum(steps).astype(float)
    up = sum(b > a for a, b in zip(iv[:-1], iv[1:]))
    assert label_targets(iv).sum() == up


@pytest.mark.parametrize("scenario,count", sorted(SCENARIO_COUNTS.items()))
def test_scenario_column_counts(scenario, count):
    assert len(scenario_columns(scenario)) == count


def test_scenario_contents():
    assert scenario_columns(1) == ("price_diff", "price_ema_dev")
    assert scenario_columns(5) == TWEET_FEATURES
    assert scenario_columns(7) == ALL_FEATURES
    with pytest.raises(ValueError):
        scenario_columns(8)


def inputs(n=60, seed=0):
    rng = np.random.default_rng(seed)
    idx = pd.bdate_range("2020-01-01", periods=n)
    price = pd.Series(100 + rng.normal(size=n).cumsum(), index=idx)
    iv = pd.Series(25 + rng.normal(size=n).cumsum() * 0.5, index=idx)
    social = pd.DataFrame(
        {"tweet_count": rng.poisson(5, n), "mean_polarity": rng.uniform(-1, 1, n)}, index=idx
    )
    return price, iv, social


def test_matrix_shapes_and_no_nans():
    price, iv, social = inputs()
    for sc, count in SCENARIO_COUNTS.items():
        m = build_matrix(price, iv, social, sc, "X")
        assert m.X.shape == (len(price) - 2, count)  # first day has no diff, last day no label
        assert not np.isnan(m.X).any()
        assert set(np.unique(m.y)) <= {0, 1}


def test_matrix_rows_line_up():
    price, iv, social = inputs()
    m = build_matrix(price, iv, social, 7)
    df = m.to_frame()
    d = df.index[5]
    i = price.index.get_loc(d)
    assert df.loc[d, "price_diff"] == pytest.approx(price.iloc[i] - price.iloc[i - 1])
    assert df.loc[d, "iv_level"] == iv.iloc[i]
    assert df.loc[d, "target"] == int(iv.iloc[i + 1] > iv.iloc[i])
    assert df.loc[d, "tweet_count"] == social["tweet_count"].iloc[i]


@given(st.integers(3, 58))
def test_no_look_ahead(t):
    price, iv, social = inputs()
    full = feature_table(price, iv, social)
    cut = feature_table(price.iloc[: t + 1], iv.iloc[: t + 1], social.iloc[: t + 1])
    cols = list(ALL_FEATURES)
    assert np.array_equal(full[cols].iloc[t].to_numpy(), cut[cols].iloc[t].to_numpy())


def test_missing_iv_day_is_reported():
    price, iv, social = inputs()
    with pytest.raises(CalendarMismatch, match="iv"):
        build_matrix(price, iv.drop(iv.index[10]), social, 3)


def test_tweet_scenario_needs_social():
    price, iv, _ = inputs()
    with pytest.raises(ValueError):
        build_matrix(price, iv, None, 5)
    assert build_matrix(price, iv, None, 6).X.shape[1] == 5
