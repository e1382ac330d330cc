from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opp_bandit.channel import (
    ChannelParams,
    Correlation,
    Deviation,
    channel_path,
    channel_stream,
    compare_deviations,
    j_step_prob,
    step_channel,
    tau,
    update_belief,
)

probs = st.floats(0.01, 0.99)


def test_validation():
    with pytest.raises(ValueError):
        ChannelParams(-0.1, 0.5)
    with pytest.raises(ValueError):
        ChannelParams(0.5, 1.2)
    with pytest.raises(ValueError):
        ChannelParams(0.0, 1.0)


def test_derived_quantities():
    p = ChannelParams(0.2, 0.8)
    assert p.p00 == pytest.approx(0.8)
    assert p.p10 == pytest.approx(0.2)
    assert p.x == pytest.approx(0.6)
    assert p.omega_o == pytest.approx(0.5)
    assert p.corr is Correlation.POSITIVE and p.positive
    assert ChannelParams(0.8, 0.2).corr is Correlation.NEGATIVE
    assert ChannelParams(0.3, 0.3).positive
    np.testing.assert_allclose(p.matrix().sum(axis=1), 1.0)


@given(probs, probs, st.integers(1, 40))
def test_j_step_matches_matrix_power(p01, p11, j):
    p = ChannelParams(p01, p11)
    Pj = np.linalg.matrix_power(p.matrix(), j)
    assert j_step_prob(0, j, p) == pytest.approx(Pj[0, 1], abs=1e-12)
    assert j_step_prob(1, j, p) == pytest.approx(Pj[1, 1], abs=1e-12)


@given(probs, probs, st.floats(0, 1))
def test_tau_contracts_to_stationary(p01, p11, w):
    p = ChannelParams(p01, p11)
    assert tau(p.omega_o, p) == pytest.approx(p.omega_o)
    for _ in range(2000):
        w = tau(w, p)
    assert w == pytest.approx(p.omega_o, abs=1e-8)


def test_update_belief():
    p = ChannelParams(0.2, 0.8)
    new = update_belief([0.5, 0.1, 1.0], 1, 1, p)
    np.testing.assert_allclose(new, [0.5, 0.8, 0.8])
    new = update_belief([0.5, 0.1, 1.0], 0, 0, p)
    np.testing.assert_allclose(new, [0.2, 0.26, 0.8])
    with pytest.raises(IndexError):
        update_belief([0.5], 1, 0, p)


@given(probs, probs, st.floats(0, 1), st.integers(0, 2**32), st.integers(1, 300))
@settings(max_examples=60)
def test_path_equals_sequential_steps(p01, p11, w, seed, T):
    p = ChannelParams(p01, p11)
    fast = channel_path(w, p, T, channel_stream(seed, 0, 0))
    rng = channel_stream(seed, 0, 0)
    s = int(rng.random() < w)
    slow = [s]
    for _ in range(T - 1):
        s = step_channel(s, p, rng)
        slow.append(s)
    np.testing.assert_array_equal(fast, slow)


def test_path_extremes():
    # p01 = 1, p11 = 0 alternates deterministically
    p = ChannelParams(1.0, 0.0)
    path = channel_path(1.0, p, 6, channel_stream(0, 0, 0))
    np.testing.assert_array_equal(path, [1, 0, 1, 0, 1, 0])


def test_empirical_stationary_fraction():
    p = ChannelParams(0.3, 0.6)
    n = 10**6
    path = channel_path(p.omega_o, p, n, channel_stream(7, 0, 0))
    # variance of the mean of a two-state chain: wo(1-wo)(1+x)/(1-x)/n
    sd = np.sqrt(p.omega_o * (1 - p.omega_o) * (1 + p.x) / (1 - p.x) / n)
    assert abs(path.mean() - p.omega_o) < 3 * sd


def test_streams_independent_of_channel_count():
    a = channel_stream(5, 2, 1).random(10)
    b = channel_stream(5, 2, 1).random(10)
    c = channel_stream(5, 2, 0).random(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@given(probs, probs, st.floats(0, 1), st.floats(0, 1), st.integers(1, 30))
def test_tau_preserves_or_reverses_order(p01, p11, a, b, k):
    p = ChannelParams(p01, p11)
    ta, tb = a, b
    for _ in range(k):
        ta, tb = tau(ta, p), tau(tb, p)
    if a > b + 1e-9 and abs(p.x) > 1e-3:
        diff = ta - tb
        expected = 1 if p.x > 0 or k % 2 == 0 else -1
        if abs(diff) > 1e-12:
            assert np.sign(diff) == expected


def _exact(dev, wo, x):
    return wo + Fraction(dev.coef) * Fraction(x) ** dev.k


@given(
    st.floats(-1, 1), st.integers(0, 60), st.floats(-1, 1), st.integers(0, 60),
    st.floats(-0.99, 0.99),
)
def test_compare_deviations_matches_rational_oracle(c1, k1, c2, k2, x):
    a, b = Deviation(c1, k1), Deviation(c2, k2)
    ea, eb = _exact(a, 0, x), _exact(b, 0, x)
    want = (ea > eb) - (ea < eb)
    got = compare_deviations(a, b, x)
    if want != got:
        # log-space ties only when magnitudes agree to rounding
        assert abs(float(ea - eb)) <= 1e-12 * max(abs(float(ea)), abs(float(eb)))


def test_deviation_beats_float_rounding():
    p = ChannelParams(0.3, 0.6)
    a = Deviation.observed(1, p, 200)
    b = Deviation.observed(1, p, 201)
    assert a.value(p) == b.value(p)  # indistinguishable in floats
    assert compare_deviations(a, b, p.x) == 1
