"""Products of the companion matrices A_k = [[a_k, b_k], [1, 0]].

Raw products overflow quickly, so every probability formula goes through the
entry ratios

    zeta_{k,n}  = y_{k+1,n} / y_{k,n},   y_{k,n} = e1 A_k ... A_n e1'
    theta_{k,n} = z_{k+1,n} / z_{k,n},   z_{k,n} = e1 A_n ... A_k e1'

which obey  zeta_{k,n} = 1/(a_k + b_k zeta_{k+1,n})  and
theta_{k,n} = 1/(a_k + b_{k+1} theta_{k+1,n}).  ``entry_product`` keeps a
mantissa/exponent pair and is used for small ranges and in tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import contfrac
from .env import roots

RAW_PRODUCT_GUARD = 10**4


@dataclass(frozen=True, order=False)
class ScaledReal:
    """mantissa * 2**exponent with |mantissa| in [1, 2) or mantissa == 0."""

    mantissa: float
    exponent: int

    @classmethod
    def from_float(cls, x):
        if x == 0:
            return cls(0.0, 0)
        m, e = math.frexp(x)          # |m| in [0.5, 1)
        return cls(m * 2.0, e - 1)

    def __float__(self):
        return math.ldexp(self.mantissa, self.exponent)

    def __mul__(self, other):
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        out = ScaledReal.from_float(self.mantissa * other.mantissa)
        return ScaledReal(out.mantissa, out.exponent + self.exponent + other.exponent)

    def __truediv__(self, other):
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        out = ScaledReal.from_float(self.mantissa / other.mantissa)
        return ScaledReal(out.mantissa, out.exponent + self.exponent - other.exponent)

    def __add__(self, other):
        if not isinstance(other, ScaledReal):
            other = ScaledReal.from_float(float(other))
        if self.mantissa == 0:
            return other
        if other.mantissa == 0:
            return self
        e = max(self.exponent, other.exponent)
        s = (math.ldexp(self.mantissa, self.exponent - e)
             + math.ldexp(other.mantissa, other.exponent - e))
        out = ScaledReal.from_float(s)
        return ScaledReal(out.mantissa, out.exponent + e if out.mantissa else 0)

    def log2(self):
        return math.log2(abs(self.mantissa)) + self.exponent

    def ratio(self, other):
        """Plain float self/other, safe when both are huge or tiny."""
        return math.ldexp(self.mantissa / other.mantissa, self.exponent - other.exponent)


def entry_product(env, k, n, i, j):
    """e_i A_k ... A_n e_j' as a ScaledReal; n = k-1 is the empty product."""
    if k < 2 or n < k - 1:
        raise ValueError("need k >= 2 and n >= k - 1")
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError("i and j must be 1 or 2")
    v0, v1 = (1.0, 0.0) if i == 1 else (0.0, 1.0)
    expo = 0
    if n >= k:
        a, b = env.coeffs(k, n + 1)
        for s in range(len(a)):
            v0, v1 = v0 * a[s] + v1, v0 * b[s]
            big = max(abs(v0), abs(v1))
            if big > 2.0**64 or (0 < big < 2.0**-64):
                _, e = math.frexp(big)
                v0 = math.ldexp(v0, -e)
                v1 = math.ldexp(v1, -e)
                expo += e
    out = ScaledReal.from_float(v0 if j == 1 else v1)
    if out.mantissa == 0:
        return out
    return ScaledReal(out.mantissa, out.exponent + expo)


def product_matrix(env, k, n):
    """Dense A_k ... A_n as floats (small ranges only; may overflow)."""
    if n - k > RAW_PRODUCT_GUARD:
        raise ValueError("raw products are limited to n - k <= 10^4")
    m = np.eye(2)
    if n >= k:
        a, b = env.coeffs(k, n + 1)
        for s in range(len(a)):
            m = m @ np.array([[a[s], b[s]], [1.0, 0.0]])
    return m


# ------------------------------------------------------------- entry ratios

def zeta_row(env, k, n):
    """zeta_{j,n} for j = k..n (array, position j-k)."""
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    a, b = env.coeffs(k, n + 1)
    out = np.empty(len(a))
    x = 0.0
    for i in range(len(a) - 1, -1, -1):
        x = 1.0 / (a[i] + b[i] * x)
        out[i] = x
    return out


def theta_row(env, k, n):
    """theta_{j,n} for j = k..n (array, position j-k)."""
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    a, _ = env.coeffs(k, n + 1)
    _, b_next = env.coeffs(k + 1, n + 2)
    out = np.empty(len(a))
    x = 0.0
    for i in range(len(a) - 1, -1, -1):
        x = 1.0 / (a[i] + b_next[i] * x)
        out[i] = x
    return out


def zeta(env, k, n):
    return float(zeta_row(env, k, n)[0])


def theta(env, k, n):
    return float(theta_row(env, k, n)[0])


def zeta_cf(env):
    """zeta_{k,n} as a continued fraction: numerators 1/b_j, denominators a_j/b_j."""
    def alpha(j):
        a, b = env.coeffs(int(j[0]), int(j[-1]) + 1)
        return a / b

    def beta(j):
        _, b = env.coeffs(int(j[0]), int(j[-1]) + 1)
        return 1.0 / b

    lim = env.limits()
    return contfrac.ContinuedFraction(alpha, beta, limits=(lim.a / lim.b, 1.0 / lim.b),
                                      meta={"type": "zeta"})


def theta_cf(env):
    """theta_{k,n}: numerators 1/b_{j+1}, denominators a_j/b_{j+1}."""
    def alpha(j):
        a, _ = env.coeffs(int(j[0]), int(j[-1]) + 1)
        _, b = env.coeffs(int(j[0]) + 1, int(j[-1]) + 2)
        return a / b

    def beta(j):
        _, b = env.coeffs(int(j[0]) + 1, int(j[-1]) + 2)
        return 1.0 / b

    lim = env.limits()
    return contfrac.ContinuedFraction(alpha, beta, limits=(lim.a / lim.b, 1.0 / lim.b),
                                      meta={"type": "theta"})


def zeta_tail(env, k, tol=contfrac.DEFAULT_TOL):
    return contfrac.tail_value(zeta_cf(env), k, tol=tol).value


def theta_tail(env, k, tol=contfrac.DEFAULT_TOL):
    return contfrac.tail_value(theta_cf(env), k, tol=tol).value


def zeta_tails(env, k, n, tol=contfrac.DEFAULT_TOL):
    """Tails zeta_j for j = k..n."""
    return contfrac.tails(zeta_cf(env), k, n, tol=tol)


def theta_tails(env, k, n, tol=contfrac.DEFAULT_TOL):
    """Tails theta_j for j = k..n."""
    return contfrac.tails(theta_cf(env), k, n, tol=tol)


# ------------------------------------------------------------ f and H sequences

def f_seq(env, k, n):
    """f^{(k)}_j for j = 1..n (position j-1).

    f_j = e1 A_{k+1}..A_{k+j} e2' / e1 A_{k+1}..A_{k+j} e1'
        = b_{k+j} / (a_{k+j} + f_{j-1}),  f_0 = 0.
    """
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    a, b = env.coeffs(k + 1, k + n + 1)
    out = np.empty(n)
    f = 0.0
    for j in range(n):
        f = b[j] / (a[j] + f)
        out[j] = f
    return out


def H_seq(env, k, n):
    """H^{(k)}_j for j = 1..n via H_j = -f_j f_{j-1} - f_j H_{j-1}, H_1 = 0."""
    f = f_seq(env, k, n)
    out = np.empty(n)
    h = 0.0
    out[0] = h
    for j in range(1, n):
        h = -f[j] * f[j - 1] - f[j] * h
        out[j] = h
    return out


# ---------------------------------------------------------------- ratio laws

def product_over_zeta(env, k, n, tol=contfrac.DEFAULT_TOL):
    """e1 A_{k+1}..A_{k+n} e1' / (zeta_{k+1}^{-1} .. zeta_{k+n}^{-1}).

    The numerator is the telescoped product of finite ratios zeta_{j,k+n},
    so the quotient is prod_j zeta_j / zeta_{j,k+n}, evaluated without overflow.
    """
    finite = zeta_row(env, k + 1, k + n)
    tail = zeta_tails(env, k + 1, k + n, tol=tol)
    return float(np.exp(np.sum(np.log(tail) - np.log(finite))))


def sum_product_over_zeta(env, k, n, tol=contfrac.DEFAULT_TOL):
    """sum_{s=1}^{n+1} e1 A_{k+s}..A_{k+n} e1' / sum_{s=1}^{n+1} zeta_{k+s}^{-1}..zeta_{k+n}^{-1}.

    Both sums are divided by their largest (s = 1) term for stability.
    """
    finite = zeta_row(env, k + 1, k + n)            # zeta_{j,k+n}, j = k+1..k+n
    tail = zeta_tails(env, k + 1, k + n, tol=tol)
    # term s is prod_{j=k+s}^{k+n} 1/ratio_j;  normalise by the s = 1 term
    num = np.concatenate(([1.0], np.cumprod(finite)))
    den = np.concatenate(([1.0], np.cumprod(tail)))
    return float(num.sum() / den.sum()) * product_over_zeta(env, k, n, tol=tol)


def limit_ratio(env):
    """rho/(rho - sigma) for the environment's limits."""
    rho, sigma = roots(env.a_limit, env.b_limit)
    return rho / (rho - sigma)
