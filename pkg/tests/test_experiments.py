import numpy as np
import pytest

from cutlab import env as envmod, experiments as ex

from conftest import random_table


def test_report_logic():
    r = ex.ConvergenceReport("q", np.array([1, 2, 3, 4]), np.array([1.5, 1.1, 1.01, 1.001]),
                             1.0, 1e-2)
    assert r.passed and r.eventually_decreasing
    bumpy = ex.ConvergenceReport("q", np.array([1, 2, 3, 4]), np.array([1.5, 1.1, 1.0, 1.2]),
                                 1.0, 1.0)
    assert not bumpy.eventually_decreasing and not bumpy.passed
    assert r.rows()[0] == (1, 1.5, 1.0, 0.5)
    assert r.summary()["verdict"] == "pass"


def test_corner_paths_agree():
    for env in (envmod.build_constant(0.5, 0.25, 0.25), random_table(np.random.default_rng(2), 400)):
        for k, n in ((1, 5), (3, 40), (10, 200)):
            assert ex.corner_cf(env, k, n) == pytest.approx(ex.corner_split(env, k, n), abs=1e-10)


def test_prop1_e0_all_pass(e0):
    reps = ex.verify_prop1_limits(e0, n_grid=(50, 100, 200, 1000), q_ratio_n=200, corner_n=200)
    assert {k: r.verdict for k, r in reps.items()} == dict.fromkeys(reps, "pass")
    assert reps["corner"].meta["cross_path_max_diff"] < 1e-10


def test_ratio_limits_e0_pass(e0):
    reps = ex.verify_ratio_limits(e0)
    assert all(r.passed for r in reps.values())


def test_bounded_ratios(e0, e1):
    for env in (e0, e1, envmod.build_corollary(0.5, "Y")):
        br = ex.verify_bounded_ratios(env, m_grid=(10, 100, 1000))
        assert br.passed, br.families


def test_normalizer_and_ratio_ci():
    assert ex.normalizer(np.e ** np.e, 0.5) == pytest.approx(np.e)
    rng = np.random.default_rng(0)
    x = rng.poisson(10, 4000)
    y = x + rng.poisson(5, 4000)
    r, ci = ex._ratio_ci(np.column_stack([x, y]), 0, 1)
    assert abs(r - 1.5) < ci


def test_growth_exact_x_small_grid():
    res = ex.growth_curve("X", [0.0], [1000, 3000, 10000])
    g = res[0]
    assert g.mc is None and g.exact is not None
    assert np.all(np.diff(g.exact) > 0)
    assert g.flatness < 3.0
    with pytest.raises(ValueError):
        ex.growth_curve("X", [1.5], [1000, 2000])
    with pytest.raises(ValueError):
        ex.growth_curve("X", [0.0], [1000, 2000], trials=10)
