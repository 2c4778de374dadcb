"""Continued fractions  b_k/(a_k + b_{k+1}/(a_{k+1} + ...))  with positive elements.

Notation in this module: ``beta`` are partial numerators, ``alpha`` partial
denominators, both indexed from 1.  ``approximant(cf, k, n)`` is the finite
fraction truncated after level n and ``tail_value(cf, k)`` its limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

DEFAULT_TOL = 1e-12
DEFAULT_DEPTH_CAP = 10**6
SLACK = 1e-12


class TailNotConverged(ArithmeticError):
    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True, eq=False)
class ContinuedFraction:
    """Pure element generators.

    ``alpha_fn`` and ``beta_fn`` take an int64 array of indices (all >= 1)
    and return float arrays.  ``limits`` optionally declares (alpha, beta).
    """

    alpha_fn: object
    beta_fn: object
    limits: tuple | None = None
    meta: dict = field(default_factory=dict)

    def elements(self, lo, hi):
        """(alpha_j, beta_j) for j in [lo, hi]."""
        if lo < 1:
            raise ValueError("continued-fraction indices start at 1")
        j = np.arange(lo, hi + 1, dtype=np.int64)
        alpha = np.asarray(self.alpha_fn(j), dtype=float)
        beta = np.asarray(self.beta_fn(j), dtype=float)
        if alpha.shape != j.shape:
            alpha = np.broadcast_to(alpha, j.shape).astype(float)
        if beta.shape != j.shape:
            beta = np.broadcast_to(beta, j.shape).astype(float)
        return alpha, beta

    def ratio_bounds(self, lo, hi):
        """Observed (min, max) of beta_j/alpha_j on [lo, hi]; a boundedness witness."""
        alpha, beta = self.elements(lo, hi)
        r = beta / alpha
        return float(r.min()), float(r.max())


def constant(alpha, beta):
    return ContinuedFraction(lambda j: np.full(len(j), float(alpha)),
                             lambda j: np.full(len(j), float(beta)),
                             limits=(float(alpha), float(beta)),
                             meta={"type": "constant", "alpha": alpha, "beta": beta})


def from_arrays(alpha, beta, limits=None):
    """Finite element table (index 1 = position 0); indices past the end raise."""
    alpha = np.array(alpha, dtype=float)
    beta = np.array(beta, dtype=float)
    if alpha.shape != beta.shape:
        raise ValueError("alpha and beta must have equal length")
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise ValueError("continued-fraction elements must be positive")
    alpha.setflags(write=False)
    beta.setflags(write=False)

    def pick(arr):
        def fn(j):
            if np.any(j > len(arr)):
                raise IndexError(f"element {int(j.max())} past the table end {len(arr)}")
            return arr[j - 1]
        return fn

    return ContinuedFraction(pick(alpha), pick(beta), limits=limits,
                             meta={"type": "table", "length": len(alpha)})


def with_constant_tail(alpha, beta, alpha_tail, beta_tail):
    """Table elements followed by constant elements for every later index."""
    alpha = np.array(alpha, dtype=float)
    beta = np.array(beta, dtype=float)

    def pick(arr, tail):
        def fn(j):
            out = np.full(len(j), float(tail))
            inside = j <= len(arr)
            out[inside] = arr[j[inside] - 1]
            return out
        return fn

    return ContinuedFraction(pick(alpha, alpha_tail), pick(beta, beta_tail),
                             limits=(float(alpha_tail), float(beta_tail)),
                             meta={"type": "table+constant", "length": len(alpha)})


@nb.njit(cache=True)
def backward_values(alpha, beta, x):
    """Backward sweep x <- beta_j/(alpha_j + x) from the last element down.

    Returns every intermediate value: out[i] is the fraction that starts at
    position i.  Seeding with x = 0 gives the approximants ending at the last
    position; seeding with the next tail gives tails.
    """
    n = alpha.shape[0]
    out = np.empty(n)
    for i in range(n - 1, -1, -1):
        x = beta[i] / (alpha[i] + x)
        out[i] = x
    return out


def approximant(cf, k, n):
    """The (n-k+1)-level approximant starting at k, by backward evaluation."""
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= n")
    alpha, beta = cf.elements(k, n)
    x = float(backward_values(alpha, beta, 0.0)[0])
    if not math.isfinite(x):
        raise ArithmeticError("non-finite approximant")
    return x


def approximants_to(cf, k, n):
    """Array of approximants xi_{j,n} for j = k..n (all ending at n)."""
    alpha, beta = cf.elements(k, n)
    return backward_values(alpha, beta, 0.0)


@dataclass(frozen=True)
class TailResult:
    value: float
    depth: int
    lower: float
    upper: float

    def __float__(self):
        return self.value


def tail_value(cf, k, tol=DEFAULT_TOL, depth_cap=DEFAULT_DEPTH_CAP, start_depth=16):
    """Limit of the approximants starting at k, bracketed to absolute width tol.

    Approximants of even depth lie below the tail and odd depths above it, so
    consecutive depths d, d+1 bracket the value.  The depth doubles until the
    bracket closes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    d = max(2, int(start_depth))
    lo = hi = None
    while True:
        d = min(d, depth_cap)
        alpha, beta = cf.elements(k, k + d)
        # depth d+1 uses every element; depth d drops the last one
        x_long = float(backward_values(alpha, beta, 0.0)[0])
        x_short = float(backward_values(alpha[:-1], beta[:-1], 0.0)[0])
        if d % 2 == 0:
            lo, hi = x_short, x_long
        else:
            lo, hi = x_long, x_short
        if hi - lo < tol:
            return TailResult(0.5 * (lo + hi), d + 1, lo, hi)
        if d >= depth_cap:
            raise TailNotConverged(
                f"tail at {k} not converged within depth {depth_cap}: bracket [{lo}, {hi}]",
                (lo, hi))
        d *= 2


def tails(cf, k, n, tol=DEFAULT_TOL, depth_cap=DEFAULT_DEPTH_CAP):
    """Tails xi_j for j = k..n: converge xi_{n+1}, then recurse backwards.

    The backward map x -> beta/(alpha + x) is a contraction for positive
    elements, so errors in the seed only shrink.
    """
    seed = tail_value(cf, n + 1, tol=tol, depth_cap=depth_cap).value
    alpha, beta = cf.elements(k, n)
    return backward_values(alpha, beta, seed)


def limit_formula(alpha, beta):
    """Common limit of the tails when alpha_n -> alpha != 0 and beta_n -> beta."""
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    disc = 1.0 + 4.0 * beta / (alpha * alpha)
    if disc < 0:
        raise ValueError("alpha^2 + 4 beta must be >= 0")
    # (alpha/2)(sqrt(disc) - 1) rewritten to avoid cancellation
    return 2.0 * beta / (alpha * (math.sqrt(disc) + 1.0))


# ------------------------------------------------------------ inequality suite

@dataclass(frozen=True)
class InequalityItem:
    name: str
    k: int
    n: int
    lhs: float
    rhs: float
    passed: bool

    @property
    def slack(self):
        """rhs - lhs; nonnegative when the item holds as lhs <= rhs."""
        return self.rhs - self.lhs


def _le(name, k, n, lhs, rhs):
    tol = SLACK * max(1.0, abs(lhs), abs(rhs))
    return InequalityItem(name, k, n, float(lhs), float(rhs), bool(lhs <= rhs + tol))


def check_tail_inequalities(cf, k, n, require_alpha_ge_1=True, tol=1e-15):
    """Evaluate both sides of the tail/approximant inequalities at (k, n).

    Every item is phrased as ``lhs <= rhs``.  Items that need alpha_j >= 1
    are included only when ``require_alpha_ge_1`` is set and the elements on
    [k, n+1] actually satisfy it.
    """
    if k < 1 or n < k:
        raise ValueError("need 1 <= k <= n")
    xi = tails(cf, k, n + 1, tol=tol)          # xi[j-k] = xi_j, j = k..n+1
    ap = approximants_to(cf, k, n)             # ap[j-k] = xi_{j,n}, j = k..n
    alpha, _ = cf.elements(k, n + 1)
    even = (n - k + 1) % 2 == 0
    items = []

    items.append(InequalityItem("tail_in_range", k, n, 0.0, float(xi[0]),
                                bool(0.0 < xi[0] < math.inf)))
    if even:
        items.append(_le("alternation", k, n, ap[0], xi[0]))
    else:
        items.append(_le("alternation", k, n, xi[0], ap[0]))

    if n > k:
        lhs, rhs = ap[0] * ap[1], xi[0] * xi[1]
        items.append(_le("pair_product", k, n, rhs, lhs) if even
                     else _le("pair_product", k, n, lhs, rhs))

    prod_tail = float(np.prod(xi[: n - k + 1]))
    prod_ap = float(np.prod(ap))
    prod_mixed = float(np.prod(xi[: n - k])) * ap[-1]
    items.append(_le("product_sandwich_lower", k, n, prod_tail, prod_ap))
    items.append(_le("product_sandwich_upper", k, n, prod_ap, prod_mixed))

    if require_alpha_ge_1 and np.all(alpha >= 1.0):
        items.append(_le("last_level", k, n, ap[-1], xi[n - k] + xi[n - k] * xi[n - k + 1]))
        if n > k:
            lhs = ap[0] + ap[0] * ap[1]
            rhs = xi[0] + xi[0] * xi[1]
            items.append(_le("sum_pair", k, n, rhs, lhs) if even
                         else _le("sum_pair", k, n, lhs, rhs))
        items.append(_le("product_one_plus_upper", k, n, prod_ap,
                         prod_tail * (1.0 + xi[n - k + 1])))
        cum_tail = np.cumprod(xi)               # xi_k...xi_j, j = k..n+1
        cum_ap = np.cumprod(ap)
        s_low = float(cum_tail[: n - k + 1].sum())
        s_ap = float(cum_ap.sum())
        s_high = float(cum_tail.sum())
        items.append(_le("sum_sandwich_lower", k, n, s_low, s_ap))
        items.append(_le("sum_sandwich_upper", k, n, s_ap, s_high))
    return items


FAMILIES = {
    "convergence": ("tail_in_range",),
    "alternation": ("alternation",),
    "pair_product": ("pair_product",),
    "product_sandwich": ("product_sandwich_lower", "product_sandwich_upper"),
    "last_level": ("last_level",),
    "sum_pair": ("sum_pair",),
    "product_one_plus": ("product_one_plus_upper",),
    "sum_sandwich": ("sum_sandwich_lower", "sum_sandwich_upper"),
}
