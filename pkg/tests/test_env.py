import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutlab import env as envmod


def test_constant_limits(e0, e1):
    lim = e0.limits()
    assert lim.rho == pytest.approx((1 + math.sqrt(3)) / 2, abs=1e-12)
    assert lim.sigma == pytest.approx((1 - math.sqrt(3)) / 2, abs=1e-12)
    assert lim.tau == pytest.approx(-lim.sigma)
    l1 = e1.limits()
    assert l1.rho == pytest.approx(0.648769, abs=1e-6)
    assert l1.sigma == pytest.approx(-0.220197, abs=1e-6)
    assert l1.a_hat is not None


@given(a=st.floats(0.05, 5.0), b=st.floats(1e-6, 3.0))
def test_roots_are_eigenvalues(a, b):
    rho, sigma = envmod.roots(a, b)
    m = np.array([[a, b], [1.0, 0.0]])
    ev = np.sort(np.linalg.eigvals(m).real)
    assert rho == pytest.approx(ev[1], rel=1e-10, abs=1e-12)
    assert sigma == pytest.approx(ev[0], rel=1e-8, abs=1e-12)
    assert -1 < sigma < 0 or b > a + 1


@pytest.mark.parametrize("law", [(0.5, 0.6, 0.1), (0.0, 0.5, 0.5), (0.5, 0.5, 0.0),
                                 (0.5, -0.1, 0.6), (float("nan"), 0.5, 0.5)])
def test_invalid_law_rejected(law):
    with pytest.raises(envmod.EnvError):
        envmod.build_constant(*law)


def test_site_zero_and_one_have_no_law(e0):
    with pytest.raises(envmod.EnvError):
        e0.law(1, 3)


def test_table_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    q = rng.uniform(0.3, 0.7, 20)
    p2 = (1 - q) * rng.uniform(0.1, 0.9, 20)
    p1 = 1 - q - p2
    env = envmod.build_table(q, p1, p2)
    path = tmp_path / "t.csv"
    envmod.write_table_csv(env, path, env.max_site)
    back = envmod.read_table_csv(path)
    for x, y in zip(env.law(2, 22), back.law(2, 22)):
        np.testing.assert_array_equal(x, y)
    with pytest.raises(envmod.EnvError):
        env.law(2, 23)


def test_from_config_and_unknown_keys(tmp_path):
    p = tmp_path / "e.json"
    p.write_text(json.dumps({"type": "constant", "q": 0.7, "p1": 0.2, "p2": 0.1}))
    env = envmod.load(p)
    assert env.a_limit == pytest.approx(3 / 7)
    with pytest.raises(envmod.EnvError):
        envmod.from_config({"type": "constant", "q": 0.7, "p1": 0.2, "p2": 0.1, "x": 1})
    with pytest.raises(envmod.EnvError):
        envmod.from_config({"type": "nope"})


def test_env_from_rho_inverts():
    rho = np.linspace(1.2, 0.9, 30)
    env = envmod.env_from_rho(rho, b_base=0.25)
    np.testing.assert_allclose(env.rho(2, 32), rho, rtol=1e-12)
    with pytest.raises(envmod.InfeasibleEnvironment):
        envmod.env_from_rho([0.1], b_base=0.25)


@pytest.mark.parametrize("sign", ["X", "Y"])
@pytest.mark.parametrize("beta", [0.0, 0.5])
def test_corollary_radii(beta, sign):
    env = envmod.build_corollary(beta, sign)
    n0 = env.meta["n0"]
    k = np.arange(n0, n0 + 500)
    rho = env.rho(n0, n0 + 500)
    r = envmod.corollary_r(k, beta)
    expect = 1 - 3 * r if sign == "X" else 1 + 3 * r
    np.testing.assert_allclose(rho, expect, rtol=1e-12)
    assert env.a_limit + env.b_limit == pytest.approx(1.0)
    q, p1, p2 = env.law(2, 2000)
    np.testing.assert_allclose(q + p1 + p2, 1.0, atol=1e-12)
    assert np.all(p1 >= 0) and np.all(p2 > 0)


def test_corollary_infeasible_n0():
    with pytest.raises(envmod.InfeasibleEnvironment) as info:
        envmod.build_corollary(0.0, "X", b_base=0.25, n0=4)
    assert info.value.smallest_n0 > 4


@settings(max_examples=50)
@given(q=st.floats(0.2, 0.8), frac=st.floats(0.01, 0.99))
def test_site_params_consistent(q, frac):
    p2 = (1 - q) * frac
    env = envmod.build_constant(q, 1 - q - p2, p2)
    sp = envmod.site_params(env, 5)
    assert sp.a == pytest.approx((1 - q) / q)
    assert sp.b == pytest.approx(p2 / q)
    assert sp.rho ** 2 == pytest.approx(sp.a * sp.rho + sp.b)
