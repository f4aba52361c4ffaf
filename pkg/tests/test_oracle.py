import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from quarterplane.model import build_ldgps_model, build_ra_model
from quarterplane.oracle import (OracleError, closed_class, compare, growth_slope, gth_banded, gth_dense,
                                 power_stationary, rng_stream, simulate, truncated_matrix,
                                 truncated_stationary)
from quarterplane.stability import ERGODIC, TRANSIENT, classify_stability, mean_drifts


def _random_stochastic(rng, n, band=None):
    P = rng.random((n, n))
    if band is not None:
        i, j = np.indices((n, n))
        P[np.abs(i - j) > band] = 0
    return P / P.sum(axis=1, keepdims=True)


def test_two_state_chain():
    P = np.array([[0.9, 0.1], [0.7 / 3, 1 - 0.7 / 3]])
    assert np.allclose(gth_dense(P), [0.7, 0.3], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10 ** 6))
def test_gth_is_stationary_and_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    P = _random_stochastic(rng, n)
    pi = gth_dense(P)
    assert pi.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(pi @ P - pi)) < 1e-14
    perm = rng.permutation(n)
    pq = gth_dense(P[np.ix_(perm, perm)])
    assert np.max(np.abs(pq - pi[perm])) < 1e-13


def test_banded_and_power_agree_with_dense():
    rng = np.random.default_rng(5)
    P = _random_stochastic(rng, 60, band=3)
    ref = gth_dense(P)
    assert np.max(np.abs(gth_banded(sp.csr_matrix(P), 3) - ref)) < 1e-14
    pw, _ = power_stationary(P)
    # the iteration stops on the step size, so its error is a few steps larger
    assert np.max(np.abs(pw - ref)) < 1e-10


def test_truncated_matrix_is_stochastic(ra_spec):
    P = truncated_matrix(ra_spec, 12, 9)
    assert P.shape == (13 * 10, 13 * 10)
    assert np.max(np.abs(np.asarray(P.sum(axis=1)).ravel() - 1)) < 1e-14
    assert P.min() >= 0


def test_closed_class_drops_unreachable_levels():
    P = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.3, 0.3, 0.4]])
    assert list(closed_class(sp.csr_matrix(P))) == [0, 1]


def test_truncation_converges(ra_spec, ra_truncated):
    assert ra_truncated.tail < 1e-10
    T1, T2 = ra_truncated.T1, ra_truncated.T2
    big = truncated_stationary(ra_spec, 2 * T1, 2 * T2)
    assert abs(big.pi[:3, :3] - ra_truncated.pi[:3, :3]).max() < 1e-9
    assert sum(ra_truncated.shares().values()) == pytest.approx(1.0, abs=1e-12)


def test_truncation_level_guard(ra_spec):
    with pytest.raises(OracleError):
        truncated_stationary(ra_spec, 3, 20)


def test_ldgps_truncated_balance():
    spec = build_ldgps_model(0.25, 0.2, 0.8, 0.7, 0.2, 0.1, 0.5, 2, 2)
    ts = truncated_stationary(spec)
    P = truncated_matrix(spec, ts.T1, ts.T2)
    pi = ts.pi.ravel()
    assert np.max(np.abs(P.T @ pi - pi)) < 1e-12


def test_simulation_is_deterministic(ra_spec):
    a = simulate(ra_spec, 20000, seed=3, window=(10, 10))
    b = simulate(ra_spec, 20000, seed=3, window=(10, 10))
    c = simulate(ra_spec, 20000, seed=3, window=(10, 10), stream=1)
    assert np.array_equal(a.freq, b.freq) and a.final == b.final
    assert not np.array_equal(a.freq, c.freq)
    assert rng_stream(1, 2).random() == rng_stream(1, 2).random()


def test_simulated_drift_matches_mean_drift(ra_spec):
    # far from the axes every step uses the homogeneous cell
    n, start = 20000, (10 ** 5, 10 ** 5)
    res = simulate(ra_spec, n, seed=1, window=(1, 1), start=start)
    d = mean_drifts(ra_spec)
    cell = ra_spec.corner
    jj = np.array([-2, -1, 0, 1])
    var_x = cell.sum(axis=1) @ jj ** 2 - d.Ex ** 2
    var_y = cell.sum(axis=0) @ jj ** 2 - d.Ey ** 2
    step = np.array(res.final) - np.array(start)
    assert abs(step[0] / n - d.Ex) < 3 * np.sqrt(var_x / n)
    assert abs(step[1] / n - d.Ey) < 3 * np.sqrt(var_y / n)


def test_growth_flag():
    fast = build_ra_model(0.7, 0.7, 2, 2, r1=0.5, r2=0.5)
    assert classify_stability(fast).classification == TRANSIENT
    assert simulate(fast, 200000, seed=0, window=(1, 1)).growing
    slow = build_ra_model(0.1, 0.1, 2, 2, r1=0.5, r2=0.5)
    assert classify_stability(slow).classification == ERGODIC
    assert not simulate(slow, 200000, seed=0, window=(1, 1)).growing


def test_growth_slope_of_line():
    t = np.arange(100)
    assert growth_slope(t, 3 * t + 2) == pytest.approx(3.0)


def test_simulated_frequencies_match_truncation(ra_spec, ra_truncated):
    res = simulate(ra_spec, 10 ** 6, seed=0, window=(6, 6))
    d = compare(res.freq, ra_truncated.window(6, 6))
    # Monte Carlo error of order 1/sqrt(horizon)
    assert d.sup < 5e-3


def test_compare_identical(ra_truncated):
    d = compare(ra_truncated, ra_truncated, window=(5, 5))
    assert d.sup == 0.0 and d.tv == 0.0
    d = compare(np.eye(2), np.zeros((3, 3)))
    assert d.sup == 1.0 and d.worst[0]["diff"] == 1.0
