import math
from datetime import date, datetime, timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivnowcast.sentiment import (
    LexiconScorer,
    TweetRecord,
    UnknownSymbol,
    aggregate_daily,
    load_lexicon,
    score_text,
    session_date,
    tokenize,
)

LEX = {"good": 1.9, "great": 3.0, "bad": -2.5, "crash": -3.0}

# Mon 2024-03-04 .. Fri 2024-03-08, then Mon 2024-03-11
CAL = [date(2024, 3, d) for d in (4, 5, 6, 7, 8, 11)]


def test_empty_text_scores_zero():
    assert score_text("", LEX) == 0.0


def test_single_token_normalization():
    assert score_text("great", LEX) == pytest.approx(3 / math.sqrt(9 + 15), rel=1e-12)
    assert score_text("great", LEX) == pytest.approx(0.6124, abs=5e-5)


def test_negation_flips_sign():
    assert score_text("not good", LEX) == pytest.approx(-1.9 / math.sqrt(1.9**2 + 15), rel=1e-12)
    assert score_text("not good", LEX) == pytest.approx(-0.4404, abs=5e-5)


def test_negation_window_is_three_tokens():
    assert score_text("not a b good", LEX) < 0
    assert score_text("not a b c good", LEX) > 0


def test_cashtags_and_urls_ignored():
    assert tokenize("$GOOD is good https://bad.example/x") == ["is", "good"]


def test_empty_lexicon_rejected():
    with pytest.raises(ValueError):
        score_text("good", {})


def test_bundled_lexicon_loads():
    lex = load_lexicon()
    assert lex["good"] == 1.9
    assert LexiconScorer(lex).score("not good") == pytest.approx(score_text("not good", LEX))


words = st.lists(st.sampled_from(["good", "great", "bad", "crash", "the", "stock", "not", "never", "up"]), max_size=30)


@given(words)
def test_scores_bounded(ws):
    assert abs(score_text(" ".join(ws), LEX)) < 1


@given(st.sampled_from(sorted(LEX)))
def test_negated_single_token_is_antisymmetric(tok):
    assert score_text(f"no {tok}", LEX) == -score_text(tok, LEX)


# ---------------------------------------------------------------- daily aggregation


def rec(ts, score, sym="AAA"):
    return TweetRecord(sym, ts, precomputed_score=score)


def test_symmetric_scores_on_one_day():
    recs = [rec(datetime(2024, 3, 5, 10), s) for s in (0.5, -0.5, 0.0)]
    day = aggregate_daily(recs, CAL)["AAA"][1]
    assert (day.tweet_count, day.mean_polarity) == (3, 0.0)


def test_quiet_day_is_zero():
    out = aggregate_daily([rec(datetime(2024, 3, 5, 10), 0.5)], CAL)["AAA"]
    assert (out[0].tweet_count, out[0].mean_polarity) == (0, 0.0)


def test_close_cutoff():
    assert session_date(datetime(2024, 3, 5, 15, 59)) == date(2024, 3, 5)
    assert session_date(datetime(2024, 3, 5, 16, 0)) == date(2024, 3, 5)
    assert session_date(datetime(2024, 3, 5, 16, 1)) == date(2024, 3, 6)
    out = aggregate_daily([rec(datetime(2024, 3, 5, 15, 59), 0.2), rec(datetime(2024, 3, 5, 16, 1), 0.4)], CAL)["AAA"]
    assert [d.tweet_count for d in out[1:3]] == [1, 1]
    assert out[2].mean_polarity == 0.4


def test_weekend_tweets_roll_to_monday():
    out = aggregate_daily([rec(datetime(2024, 3, 9, 12), 0.3), rec(datetime(2024, 3, 8, 20), 0.1)], CAL)["AAA"]
    assert out[-1].tweet_count == 2
    assert out[-1].mean_polarity == pytest.approx(0.2)


def test_text_records_use_scorer():
    r = TweetRecord("AAA", datetime(2024, 3, 4, 9), text="great")
    out = aggregate_daily([r], CAL, LexiconScorer(LEX))["AAA"]
    assert out[0].mean_polarity == pytest.approx(3 / math.sqrt(24))
    with pytest.raises(ValueError):
        aggregate_daily([r], CAL)


def test_unknown_symbol():
    with pytest.raises(UnknownSymbol):
        aggregate_daily([rec(datetime(2024, 3, 4, 9), 0.1, "ZZZ")], CAL, universe=["AAA"])


def test_universe_symbols_without_tweets_are_zero_filled():
    out = aggregate_daily([], CAL, universe=["AAA", "BBB"])
    assert sorted(out) == ["AAA", "BBB"]
    assert all(d.tweet_count == 0 for d in out["BBB"])


stamps = st.datetimes(min_value=datetime(2024, 3, 1), max_value=datetime(2024, 3, 14))
records = st.lists(
    st.tuples(stamps, st.floats(-1, 1), st.sampled_from(["AAA", "BBB"])).map(lambda t: rec(t[0], t[1], t[2])),
    max_size=60,
)


@given(records)
def test_counts_conserved_within_calendar_span(recs):
    out = aggregate_daily(recs, CAL)
    inside = sum(CAL[0] <= session_date(r.timestamp) <= CAL[-1] for r in recs)
    assert sum(d.tweet_count for days in out.values() for d in days) == inside


@given(records, st.randoms())
def test_record_order_irrelevant(recs, rnd):
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert aggregate_daily(recs, CAL) == aggregate_daily(shuffled, CAL)


def test_record_validation():
    with pytest.raises(ValueError):
        TweetRecord("AAA", datetime(2024, 3, 4))
    with pytest.raises(ValueError):
        TweetRecord("AAA", datetime(2024, 3, 4), precomputed_score=1.5)
    assert TweetRecord("AAA", datetime(2024, 3, 4) + timedelta(hours=1), precomputed_score=-1.0)
