import math

import numpy as np
import pytest

from cutlab import env as envmod, oracle, prob

from conftest import random_table

SQ3 = math.sqrt(3)


def test_escape_Y_split_matches_oracle_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        env = random_table(rng, 200)
        m = int(rng.integers(1, 50))
        n = m + int(rng.integers(2, 120))
        res = oracle.absorption_solve(oracle.AbsorptionProblem(env, "Y", m, n))
        for k in range(m + 1, n):
            s = prob.escape_Y_split(env, m, k, n)
            o = res.at(k)
            assert s.q_low == pytest.approx(o["exit_n"], abs=1e-10)
            assert s.q_high == pytest.approx(o["exit_n1"], abs=1e-10)


def test_escape_X_down_matches_oracle_random():
    rng = np.random.default_rng(2)
    for _ in range(20):
        env = random_table(rng, 200)
        m = int(rng.integers(1, 50))
        n = m + int(rng.integers(2, 120))
        res = oracle.absorption_solve(oracle.AbsorptionProblem(env, "X", m, n))
        for k in range(m + 1, n):
            o = res.at(k)
            assert prob.escape_X_down(env, m, k, n) == pytest.approx(
                o["exit_m"] + o["exit_m1"], abs=1e-10)


def test_escape_boundaries(e0):
    assert prob.escape_Y_split(e0, 3, 3, 9).q_plus == 0.0
    assert prob.escape_Y_split(e0, 3, 9, 9).q_low == 1.0
    assert prob.escape_Y_split(e0, 3, 10, 9).q_high == 1.0
    with pytest.raises(ValueError):
        prob.escape_Y_split(e0, 3, 4, 4)


def test_constant_series_closed_forms(e0, e1):
    assert prob.series_F_X(e1, 5).estimate == pytest.approx(7 / 3, rel=1e-10)
    assert prob.series_F_Y(e0, 5).estimate == pytest.approx(2 + SQ3, rel=1e-10)
    rho1 = e1.limits().rho
    assert prob.series_D(e1, "X", 5).estimate == pytest.approx(1 / (1 - rho1), rel=1e-10)
    assert prob.series_F_X(e0, 5).diverged
    assert prob.series_F_Y(e1, 5).diverged


def test_partial_series_is_lower_bound(e1):
    full = prob.series_F_X(e1, 5)
    part = prob.series_F_X(e1, 5, 20)
    assert part.value < full.value


def test_never_return_matches_oracle(e1, e0):
    env = random_table(np.random.default_rng(4), 3000, q_range=(0.6, 0.8))
    for n in (5, 40):
        val, _, ok = oracle.never_return(env, "X", n)
        assert ok
        assert prob.escape_X_never_return(env, n) == pytest.approx(val, abs=1e-9)
    assert prob.escape_X_never_return(e1, 10) == pytest.approx(3 / 7, abs=1e-12)
    assert prob.escape_Y_to_inf(e0, 10) == pytest.approx(1 / (2 + SQ3), abs=1e-12)


def test_return_prob_monotone(e1):
    F = prob.series_F_X(e1, 50).estimate
    r = [prob.return_prob_X(e1, 50, x, F) for x in range(51, 80)]
    assert r[0] == pytest.approx(4 / 7)
    assert np.all(np.diff(r) <= 1e-15)
    assert prob.return_prob_X(e1, 50, 50) == 1.0


def test_eta_and_h_limits(e0):
    sig = e0.limits().sigma
    assert prob.eta_diag(e0, 1000) == pytest.approx(-sig, abs=1e-12)
    assert prob.h_layer(e0, 1000)[1] == pytest.approx(-sig / (1 - sig), abs=1e-10)
    # by hand: from 3 (k = 2 layer {4,5}) reach 5 first with prob p2 * ...
    assert prob.h_layer(e0, 1) == (1.0, 0.0)


def test_h_matches_simulation_free_oracle(e0):
    # h_2(2): Y from 2 first enters [4, inf) at 5 -- first-step system on {1,2,3}
    env = e0
    q, p1, p2 = 0.5, 0.25, 0.25
    # u_x = P(enter at 5) from x; forced 1 -> 0 -> 2
    # u_2 = q u_1 + p1 u_3 + p2 * 0 ; u_1 = u_2 ; u_3 = q u_2 + p1 * 0 + p2 * 1
    A = np.array([[1 - q, -p1], [-q, 1.0]])
    u2, _ = np.linalg.solve(A, [0.0, p2])
    assert prob.h_layer(env, 2)[1] == pytest.approx(u2, abs=1e-14)


def test_cutpoint_probabilities_constant(e1, e0):
    assert prob.p_cut_X(e1, 10) == pytest.approx(0.3, abs=1e-12)
    assert prob.p_cut_X(e0, 10) == 0.0
    j = prob.p_cut_X_joint(e1, 10, 20)
    assert 0 < j < prob.p_cut_X(e1, 20)
    lc = prob.p_cut_layer_Y(e0, 200)
    assert lc.lower <= lc.exact <= lc.upper
    assert lc.exact == pytest.approx(0.1435935, abs=1e-6)
    assert lc.asym == pytest.approx(lc.exact, abs=1e-9)


def test_expected_cutpoints_constant(e1):
    es = prob.expected_cutpoints_X(e1, [10, 100, 1000])
    np.testing.assert_allclose(es, 0.3 * (np.array([10, 100, 1000]) - 1), rtol=1e-10)


def test_transience_classification(e0, e1):
    assert prob.transient(e0, "Y").verdict == "transient"
    assert prob.transient(e0, "X").verdict == "recurrent"
    assert prob.transient(e1, "X").verdict == "transient"
    assert prob.transient(e1, "Y").verdict == "recurrent"
    cx = envmod.build_corollary(0.5, "X")
    t = prob.transient(cx, "X")
    assert t.verdict == "transient" and not t.decisive


def test_cutpoint_criterion_corollary():
    cx = envmod.build_corollary(0.0, "X")
    rep = prob.cutpoint_criterion(cx, "X", 10**5)
    assert rep["prediction"] in ("infinite", "inconclusive")
    assert rep["rho_monotone"]
    assert np.all(np.diff(rep["partial_sums"]) > 0)


def test_tau_constant(e0):
    assert prob.tau(e0) == pytest.approx(-e0.limits().sigma)
