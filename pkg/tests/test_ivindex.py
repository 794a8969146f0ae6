import math
from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

import desk_chain
from ivnowcast.ivindex import (
    EmptySide,
    ExpiryQuotes,
    NoExpiries,
    NoPairedStrike,
    OptionChainSnapshot,
    OptionQuote,
    TermVariance,
    forward_and_k0,
    interpolate_variance,
    iv30,
    select_term_strikes,
    term_variance,
)

EXP = date(2024, 2, 1)


def chain(rows):
    """rows: (strike, call (bid, ask) or None, put (bid, ask) or None)"""
    quotes = []
    for k, c, p in rows:
        if c is not None:
            quotes.append(OptionQuote(EXP, k, "call", *c))
        if p is not None:
            quotes.append(OptionQuote(EXP, k, "put", *p))
    return ExpiryQuotes.from_quotes(quotes)


def grid(strikes, call_bid=1.0, put_bid=1.0):
    return chain([(k, (call_bid, call_bid + 0.2), (put_bid, put_bid + 0.2)) for k in strikes])


# ---------------------------------------------------------------- strike selection


def test_uniform_grid_all_widths_five():
    sel = select_term_strikes(grid([90, 95, 100, 105, 110]), 100.0, 100.0)
    assert [s.strike for s in sel] == [90, 95, 100, 105, 110]
    assert [s.delta_k for s in sel] == [5, 5, 5, 5, 5]


def test_two_zero_call_bids_leave_only_k0_on_call_side():
    c = chain(
        [
            (90, (10.0, 10.4), (0.3, 0.5)),
            (95, (5.0, 5.4), (1.0, 1.2)),
            (100, (2.0, 2.2), (2.0, 2.2)),
            (105, (0.0, 0.1), (5.0, 5.4)),
            (110, (0.0, 0.1), (10.0, 10.4)),
        ]
    )
    sel = select_term_strikes(c, 100.0, 100.0)
    assert [s.strike for s in sel] == [90, 95, 100]
    assert sel[-1].q == pytest.approx(2.1)


def test_non_uniform_half_distance():
    sel = select_term_strikes(grid([80, 90, 95, 100]), 100.0, 100.0)
    widths = {s.strike: s.delta_k for s in sel}
    assert widths[90] == 7.5
    assert widths[80] == 10  # one-sided at the edge
    assert widths[100] == 5


def test_single_zero_bid_is_skipped_not_terminal():
    c = chain([(85, None, (0.2, 0.3)), (90, None, (0.0, 0.1)), (95, None, (1.0, 1.2)), (100, (2.0, 2.2), (2.0, 2.2))])
    assert [s.strike for s in select_term_strikes(c, 100.0, 100.0)] == [85, 95, 100]


def test_k0_mid_is_average_of_put_and_call():
    c = chain([(95, None, (1.0, 1.2)), (100, (3.0, 3.2), (2.0, 2.2)), (105, (1.0, 1.2), None)])
    k0 = [s for s in select_term_strikes(c, 100.0, 100.0) if s.strike == 100][0]
    assert k0.q == pytest.approx((3.1 + 2.1) / 2)


def test_both_sides_empty_raises():
    c = chain([(95, None, (0.0, 0.1)), (100, (2.0, 2.2), (2.0, 2.2)), (105, (0.0, 0.1), None)])
    with pytest.raises(EmptySide):
        select_term_strikes(c, 100.0, 100.0)


# ---------------------------------------------------------------- forward


def test_forward_equal_mids():
    c = chain([(k, (2.0, 2.0) if k == 100 else (9.0, 9.0), (2.0, 2.0)) for k in (90, 95, 100, 105, 110)])
    assert forward_and_k0(c, 0.0, 0.1) == (100.0, 100.0)


def test_forward_tie_goes_to_lower_strike():
    assert forward_and_k0(grid([90, 95, 100, 105, 110]), 0.0, 0.1) == (90.0, 90.0)


def test_forward_shifted_by_call_put_gap():
    c = chain([(k, (3.0, 3.0) if k == 100 else (9.0, 9.0), (1.0, 1.0)) for k in (90, 95, 100, 105, 110)])
    assert forward_and_k0(c, 0.0, 0.3) == (102.0, 100.0)


def test_forward_with_rate():
    c = chain([(k, (2.5, 2.5) if k == 100 else (9.0, 9.0), (1.0, 1.0)) for k in (90, 95, 100, 105, 110)])
    f, k0 = forward_and_k0(c, 0.02, 0.0822)
    assert f == pytest.approx(100 + 1.5 * math.exp(0.001644), rel=1e-15)
    assert k0 == 100.0


def test_forward_needs_a_paired_strike():
    with pytest.raises(NoPairedStrike):
        forward_and_k0(chain([(95, None, (1.0, 1.2)), (100, (1.0, 1.2), None)]), 0.0, 0.1)


# ---------------------------------------------------------------- term variance


def test_four_strike_desk_term():
    # T = 30/365, R = 1%, put 90/95 below, call 105 above K0=100
    c = chain(
        [
            (90, None, (0.8, 1.0)),
            (95, None, (1.9, 2.1)),
            (100, (3.1, 3.3), (3.0, 3.2)),
            (105, (1.4, 1.6), None),
        ]
    )
    t, r = 30 / 365, 0.01
    tv = term_variance(c, r, t)
    f = 100 + math.exp(r * t) * 0.1
    total = (5 / 90**2 * 0.9 + 5 / 95**2 * 2.0 + 5 / 100**2 * 3.15 + 5 / 105**2 * 1.5) * math.exp(r * t)
    expected = 2 / t * total - (f / 100 - 1) ** 2 / t
    assert tv.K0 == 100
    assert tv.F == pytest.approx(f, rel=1e-15)
    assert tv.sigma_squared == pytest.approx(expected, rel=1e-10)


def test_correction_vanishes_when_forward_is_k0():
    tv = term_variance(grid([90, 95, 100, 105, 110]), 0.0, 0.1)  # F = K0 = 90, strip is all calls
    assert tv.F == tv.K0
    assert tv.sigma_squared == pytest.approx(2 / 0.1 * sum(5 / k**2 * 1.1 for k in (90, 95, 100, 105, 110)))


def test_doubling_prices_doubles_variance_when_forward_is_k0():
    a = term_variance(grid([90, 95, 100, 105, 110], 1.0, 1.0), 0.0, 0.1)
    b = term_variance(grid([90, 95, 100, 105, 110], 2.1, 2.1), 0.0, 0.1)  # mids 1.1 -> 2.2
    assert b.sigma_squared == pytest.approx(2 * a.sigma_squared, rel=1e-12)


@given(bump=st.floats(0.0, 5.0))
def test_raising_an_otm_price_does_not_lower_variance(bump):
    snap = desk_chain.snapshot()
    near = snap.expiries()[desk_chain.NEAR]
    base = term_variance(near, desk_chain.RATE, 23 / 365)
    bumped = []
    for q in snap.quotes:
        if q.expiry_date == desk_chain.NEAR and q.strike == 90 and q.right == "put":
            q = OptionQuote(q.expiry_date, q.strike, q.right, q.bid + bump, q.ask + bump)
        bumped.append(q)
    after = term_variance(ExpiryQuotes.from_quotes([q for q in bumped if q.expiry_date == desk_chain.NEAR]),
                          desk_chain.RATE, 23 / 365)
    assert [s.strike for s in after.strikes] == [s.strike for s in base.strikes]
    assert after.sigma_squared >= base.sigma_squared - 1e-15


# ---------------------------------------------------------------- interpolation and iv30


def term(T, var):
    return TermVariance(None, T, 100.0, 100.0, var)


def test_constant_variance_interpolates_to_itself():
    for t1, t2 in [(23, 37), (10, 20), (40, 60)]:
        v = interpolate_variance(term(t1 / 365, 0.09), term(t2 / 365, 0.09), 30 / 365)
        assert 100 * math.sqrt(v) == pytest.approx(30.0, rel=1e-12)


def test_manual_interpolation():
    t1, t2, t = 23 / 365, 37 / 365, 30 / 365
    total = 0.04 * t1 + (0.0625 * t2 - 0.04 * t1) * (t - t1) / (t2 - t1)
    expected = 100 * math.sqrt(total / t)
    got = 100 * math.sqrt(interpolate_variance(term(t1, 0.04), term(t2, 0.0625), t))
    assert got == pytest.approx(expected, rel=1e-12)
    assert 20 < got < 25


@given(
    d1=st.integers(1, 30),
    d2=st.integers(30, 90),
    v1=st.floats(1e-4, 4.0),
    v2=st.floats(1e-4, 4.0),
)
def test_interpolation_lies_between_terms(d1, d2, v1, v2):
    if d1 == d2:
        return
    v = interpolate_variance(term(d1 / 365, v1), term(d2 / 365, v2), 30 / 365)
    assert min(v1, v2) * (1 - 1e-12) <= v <= max(v1, v2) * (1 + 1e-12)


def test_single_expiry_used_as_is():
    quotes = [
        OptionQuote(date(2024, 2, 1), k, r, 1.0, 1.2)
        for k in (90, 95, 100, 105, 110)
        for r in ("call", "put")
    ]
    snap = OptionChainSnapshot("X", date(2024, 1, 2), quotes, 0.0)
    tv = term_variance(snap.expiries()[date(2024, 2, 1)], 0.0, 30 / 365)
    assert iv30(snap).iv == pytest.approx(100 * math.sqrt(tv.sigma_squared), rel=1e-15)


def test_desk_chain_matches_hand_evaluation():
    expected, var1, var2 = desk_chain.hand_iv30()
    snap = desk_chain.snapshot()
    terms = {d: term_variance(q, desk_chain.RATE, (d - desk_chain.ASOF).days / 365) for d, q in snap.expiries().items()}
    assert terms[desk_chain.NEAR].sigma_squared == pytest.approx(var1, rel=1e-10)
    assert terms[desk_chain.NEXT].sigma_squared == pytest.approx(var2, rel=1e-10)
    assert iv30(snap).iv == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_scale_equivariance(c):
    assert iv30(desk_chain.snapshot(c)).iv == pytest.approx(iv30(desk_chain.snapshot()).iv, rel=1e-12)


@given(c=st.floats(0.01, 1000.0))
def test_scale_equivariance_property(c):
    assert iv30(desk_chain.snapshot(c)).iv == pytest.approx(iv30(desk_chain.snapshot()).iv, rel=1e-9)


def test_deterministic():
    assert iv30(desk_chain.snapshot()) == iv30(desk_chain.snapshot())


def test_empty_snapshot():
    with pytest.raises(NoExpiries):
        iv30(OptionChainSnapshot("X", date(2024, 1, 2), (), 0.0))


def test_quote_validation():
    with pytest.raises(ValueError):
        OptionQuote(EXP, 100, "call", 2.0, 1.0)
    with pytest.raises(ValueError):
        OptionQuote(EXP, 100, "straddle", 1.0, 2.0)
    with pytest.raises(ValueError):
        OptionChainSnapshot("X", EXP, [OptionQuote(EXP, 100, "call", 1.0, 2.0)])
