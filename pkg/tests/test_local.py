import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_cusum, brute_tecusum
from tecusum import (
    CusumState,
    FmaState,
    GaussianMeanShiftModel,
    TeCusumState,
    cusum_update,
    estimate_change_point,
    fma_update,
    reset,
    tecusum_update,
)
from tecusum.local import EmptyStateError

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


def feed(state, incs):
    out = []
    for inc in incs:
        state.update(inc)
        out.append(state.value)
    return out


def test_cusum_hand_sequence():
    assert feed(CusumState(), [1, -2, 0.5]) == [1, -1, 0.5]


def test_cusum_zero_increments():
    assert feed(CusumState(), [0.0] * 10) == [0.0] * 10


def test_tecusum_hand_sequence():
    assert feed(TeCusumState(), [1, -2, 0.5]) == [1, 1, 1]


def test_tecusum_monotone_positive_increments():
    s = TeCusumState()
    for inc in [0.1, 0.5, 2.0, 0.3]:
        s.update(inc)
        assert s.g == s.w


def test_fma_hand_sequences():
    assert feed(FmaState(3), [1, 1, 1, 1]) == [1, 2, 3, 3]
    incs = [0.3, -1.2, 4.0, 2.5]
    assert feed(FmaState(1), incs) == incs


def test_functional_wrappers_match_methods():
    a, b = CusumState(), CusumState()
    for inc in [0.4, -1.0, 2.0]:
        cusum_update(a, inc)
        b.update(inc)
    assert a == b
    t = tecusum_update(TeCusumState(), 1.0)
    assert t.g == 1.0
    f = fma_update(FmaState(2), 3.0)
    assert f.z == 3.0


def test_cusum_brute_force_500(rng):
    incs = list(rng.normal(-0.1, 1.0, 500))
    ref = brute_cusum(incs)
    got = feed(CusumState(), incs)
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_tecusum_brute_force_300(rng):
    incs = list(rng.normal(-0.05, 1.0, 300))
    ref = brute_tecusum(incs)
    got = feed(TeCusumState(), incs)
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_fma_resummation_oracle(rng):
    incs = rng.normal(size=10_000)
    s = FmaState(50)
    for n, inc in enumerate(incs, start=1):
        s.update(inc)
        assert abs(s.z - incs[max(0, n - 50):n].sum()) < 1e-9
        assert len(s.window) <= 50


def test_fma_drift_after_million_updates(rng):
    incs = rng.normal(size=1_000_000)
    s = FmaState(200)
    for inc in incs.tolist():
        s.update(inc)
    assert abs(s.z - math.fsum(s.window)) <= 1e-9
    assert abs(s.z - incs[-200:].sum()) <= 1e-9


def test_change_point_unique_minimum():
    s = CusumState()
    # S sequence 0, -1, -0.5, 2
    for inc in [-1, 0.5, 2.5]:
        s.update(inc)
    s.update(0.0)  # S_4 = 2 makes S_3 part of the history too
    assert estimate_change_point(s).nu_hat == 1


def test_change_point_latest_tie():
    s = CusumState()
    for inc in [-1, 0.0, 4.0]:  # S = 0, -1, -1, 3
        s.update(inc)
    assert estimate_change_point(s).nu_hat == 2


def test_change_point_empty_state():
    with pytest.raises(EmptyStateError):
        estimate_change_point(CusumState())


def test_change_point_nu_hat_below_n(rng):
    s = TeCusumState()
    for inc in rng.normal(size=200):
        s.update(inc)
        assert estimate_change_point(s).nu_hat < s.n


def test_tecusum_end_estimate_is_argmax_of_w():
    s = TeCusumState()
    ws = feed(CusumState(), [-1, 2, 3, -4, 1])
    for inc in [-1, 2, 3, -4, 1]:
        s.update(inc)
    cp = estimate_change_point(s)
    assert cp.n_hat == int(np.argmax(ws)) + 1
    assert cp.nu_hat == 1


def test_change_point_monte_carlo_regression():
    # Change at sample 1000 of a 3000-sample stream, detector tuned to the
    # true shift. Distribution frozen from this implementation.
    m = GaussianMeanShiftModel(0.0, 0.1, 1.0)
    rng = np.random.default_rng(20240601)
    nus = []
    for _ in range(1000):
        x = rng.standard_normal(3000)
        x[1000:] += 0.1
        s = CusumState()
        for inc in m.llr_array(x).tolist():
            s.update(inc)
        nus.append(estimate_change_point(s).nu_hat)
    nus = np.array(nus)
    # numpy oracle: latest argmin of S_k over 0 <= k < n
    assert nus[:5].tolist() == [1119, 1078, 1169, 1050, 1030]
    err = np.abs(nus - 1000)
    assert np.median(err) == 146.0
    assert np.median(err) < 3000 / 10


def test_change_point_numpy_oracle(rng):
    m = GaussianMeanShiftModel(0.0, 0.1, 1.0)
    for _ in range(20):
        x = rng.standard_normal(500)
        x[200:] += 0.3
        incs = m.llr_array(x)
        s = CusumState()
        for inc in incs.tolist():
            s.update(inc)
        S = np.concatenate(([0.0], np.cumsum(incs)))[:-1]  # S_0 .. S_{n-1}
        latest = len(S) - 1 - int(np.argmin(S[::-1]))
        assert estimate_change_point(s).nu_hat == latest


@pytest.mark.parametrize("make", [CusumState, TeCusumState, lambda: FmaState(7)])
def test_reset_matches_fresh_state(make, rng):
    s = make()
    for inc in rng.normal(size=30):
        s.update(inc)
    assert reset(s) == make()
    s.update(0.25)
    assert s == make().update(0.25)


def test_reset_replay_is_identical(rng):
    incs = rng.normal(size=100).tolist()
    a = TeCusumState()
    for inc in rng.normal(size=57):
        a.update(inc)
    a.reset()
    b = TeCusumState()
    assert feed(a, incs) == feed(b, incs)


@pytest.mark.parametrize("state", [CusumState(), TeCusumState(), FmaState(3)])
def test_non_finite_increment_rejected(state):
    with pytest.raises(ValueError):
        state.update(math.nan)


def test_fma_rejects_bad_window():
    for w in (0, -3, 2.5):
        with pytest.raises(ValueError):
            FmaState(w)


def test_memory_footprints():
    assert CusumState.stored_reals == 3
    assert TeCusumState.stored_reals == 4
    f = FmaState(200)
    assert f.capacity == 200
    assert f.stored_reals == 201


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=60))
def test_property_duality_and_running_max(incs):
    te = TeCusumState()
    S, g_ref = [0.0], 0.0
    for inc in incs:
        te.update(inc)
        S.append(S[-1] + inc)
        n = len(S) - 1
        assert te.w == pytest.approx(S[n] - min(S[:n]), abs=1e-9)
        assert max(0.0, te.w) == pytest.approx(S[n] - min(S), abs=1e-9)
        g_ref = max(g_ref, te.w)
        assert te.g == g_ref
        assert te.w <= te.g


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=60), st.floats(min_value=1e-6, max_value=100))
def test_property_univariate_equivalence(incs, h):
    w_state, g_state = CusumState(), TeCusumState()
    first_w = first_g = None
    for n, inc in enumerate(incs, start=1):
        w_state.update(inc)
        g_state.update(inc)
        if first_w is None and w_state.w > h:
            first_w = n
        if first_g is None and g_state.g > h:
            first_g = n
    assert first_w == first_g


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=1, max_size=80), st.integers(min_value=1, max_value=20))
def test_property_fma_window_sum(incs, w):
    f = FmaState(w)
    for n, inc in enumerate(incs, start=1):
        f.update(inc)
        assert f.z == pytest.approx(math.fsum(incs[max(0, n - w):n]), abs=1e-9)
