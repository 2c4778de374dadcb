import numpy as np
import pytest
from scipy.linalg import solve_banded

from cutlab import oracle, prob


def test_single_state_intervals(e0):
    y = oracle.absorption_solve(oracle.AbsorptionProblem(e0, "Y", 4, 6)).at(5)
    assert (y["down"], y["exit_n"], y["exit_n1"]) == pytest.approx((0.5, 0.25, 0.25))
    x = oracle.absorption_solve(oracle.AbsorptionProblem(e0, "X", 4, 6)).at(5)
    assert x["exit_m"] + x["exit_m1"] == pytest.approx(0.5)
    assert x["up"] == pytest.approx(0.5)


def test_spec_example_matches_formula(e0):
    res = oracle.absorption_solve(oracle.AbsorptionProblem(e0, "Y", 1, 8)).at(3)
    s = prob.escape_Y_split(e0, 1, 3, 8)
    assert s.q_low == pytest.approx(res["exit_n"], abs=1e-10)
    assert s.q_high == pytest.approx(res["exit_n1"], abs=1e-10)


@pytest.mark.parametrize("lower,upper", [(1, 2), (2, 1), (2, 2)])
def test_band_solve_matches_scipy(lower, upper):
    rng = np.random.default_rng(lower * 10 + upper)
    n = 60
    ab = rng.uniform(-0.2, 0.2, (lower + upper + 1, n))
    ab[upper] = 2.0 + rng.uniform(0, 1, n)       # diagonally dominant
    rhs = rng.normal(size=(n, 3))
    np.testing.assert_allclose(oracle.band_solve(ab, lower, upper, rhs),
                               solve_banded((lower, upper), ab, rhs), rtol=1e-12, atol=1e-13)


def test_guards(e0):
    with pytest.raises(ValueError):
        oracle.AbsorptionProblem(e0, "Y", 3, 4)
    with pytest.raises(ValueError):
        oracle.AbsorptionProblem(e0, "Y", 1, 1 + oracle.MAX_STATES + 2)
    with pytest.raises(ValueError):
        oracle.AbsorptionProblem(e0, "Z", 1, 5)


def test_never_return_guard_refinement_monotone(e1):
    vals = []
    for g in (16, 32, 64, 128):
        r = oracle.absorption_solve(oracle.AbsorptionProblem(e1, "X", 10, 10 + g)).at(11)
        vals.append(r["up"])
    assert np.all(np.diff(vals) <= 0)
    val, _, ok = oracle.never_return(e1, "X", 10)
    assert ok and val == pytest.approx(3 / 7, abs=1e-10)


def test_mc_escape_bernoulli(e0):
    p, ci = oracle.mc_escape_estimate(e0, "Y", 5, 6, 7, 10**5, seed=1)
    assert abs(p - 0.5) < ci
    assert ci == pytest.approx(3 * np.sqrt(0.25 / 1e5), rel=1e-3)
    assert oracle.mc_escape_estimate(e0, "Y", 5, 6, 7, 10**5, seed=1)[0] == p
    with pytest.raises(ValueError):
        oracle.mc_escape_estimate(e0, "Y", 5, 6, 7, 10, seed=1)


def test_mc_escape_against_solve(e0):
    res = oracle.absorption_solve(oracle.AbsorptionProblem(e0, "X", 3, 20)).at(10)
    p, ci = oracle.mc_escape_estimate(e0, "X", 3, 10, 20, 50000, seed=9)
    assert abs(p - (res["exit_m"] + res["exit_m1"])) < ci
