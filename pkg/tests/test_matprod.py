import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutlab import matprod

from conftest import random_table


def _raw(env, k, n):
    return matprod.product_matrix(env, k, n)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(2, 20), length=st.integers(1, 40))
def test_zeta_theta_match_raw_products(seed, k, length):
    env = random_table(np.random.default_rng(seed), 80)
    n = k + length
    z = matprod.zeta_row(env, k, n)
    t = matprod.theta_row(env, k, n)
    for j in range(k, n):
        y_j = _raw(env, j, n)[0, 0]
        y_j1 = _raw(env, j + 1, n)[0, 0]
        assert z[j - k] == pytest.approx(y_j1 / y_j, rel=1e-11)
        # z_{j,n} = e1 A_n .. A_j e1'
        def rev(lo):
            m = np.eye(2)
            a, b = env.coeffs(lo, n + 1)
            for s in range(len(a) - 1, -1, -1):
                m = m @ np.array([[a[s], b[s]], [1.0, 0.0]])
            return m[0, 0]
        assert t[j - k] == pytest.approx(rev(j + 1) / rev(j), rel=1e-11)


def test_entry_product_scaled_matches_dense(e0):
    for i in (1, 2):
        for j in (1, 2):
            v = matprod.entry_product(e0, 3, 40, i, j)
            assert float(v) == pytest.approx(_raw(e0, 3, 40)[i - 1, j - 1], rel=1e-12)
    # far past overflow the log stays finite and grows like n log rho
    big = matprod.entry_product(e0, 2, 5001, 1, 1)
    assert big.log2() == pytest.approx(5000 * np.log2(e0.limits().rho), rel=1e-3)


def test_f_seq_is_entry_ratio():
    env = random_table(np.random.default_rng(3), 60)
    k = 4
    f = matprod.f_seq(env, k, 30)
    for j in range(1, 31):
        m = _raw(env, k + 1, k + j)
        assert f[j - 1] == pytest.approx(m[0, 1] / m[0, 0], rel=1e-12)


def test_H_recursion_matches_alternating_sum():
    # H_n = sum_{s=1}^{n-1} (-1)^{n-s} f_s ... f_n
    env = random_table(np.random.default_rng(5), 60)
    n_max = 30
    f = matprod.f_seq(env, 2, n_max)
    H = matprod.H_seq(env, 2, n_max)
    for n in range(1, n_max + 1):
        explicit = sum((-1) ** (n - s) * np.prod(f[s - 1:n]) for s in range(1, n))
        assert H[n - 1] == pytest.approx(explicit, abs=1e-15)
    # the other indexing (sum up to n) would not vanish at n = 1
    assert H[0] == 0.0 and f[0] != 0.0


def test_H_plus_f_is_full_alternating_sum():
    env = random_table(np.random.default_rng(9), 40)
    n_max = 12
    f = matprod.f_seq(env, 2, n_max)
    H = matprod.H_seq(env, 2, n_max)
    for n in range(1, n_max + 1):
        alt = sum((-1) ** (n - s) * np.prod(f[s - 1:n]) for s in range(1, n + 1))
        assert H[n - 1] + f[n - 1] == pytest.approx(alt, abs=1e-14)


def test_zeta_tails_constant_limit(e0, e1):
    for env in (e0, e1):
        rho = env.limits().rho
        z = matprod.zeta_tails(env, 5, 50)
        np.testing.assert_allclose(z, 1 / rho, rtol=1e-10)
        t = matprod.theta_tails(env, 5, 50)
        np.testing.assert_allclose(t, 1 / rho, rtol=1e-10)


def test_product_over_zeta_bounded(e0):
    vals = [matprod.product_over_zeta(e0, 5, n) for n in (10, 50, 200)]
    target = matprod.limit_ratio(e0)
    assert abs(vals[-1] - target) < 1e-6
    assert abs(vals[-1] - target) <= abs(vals[0] - target)


def test_raw_product_guard(e0):
    with pytest.raises(ValueError):
        matprod.product_matrix(e0, 2, 2 + 10**4 + 1)
