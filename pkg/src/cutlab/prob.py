"""Closed-form probabilities: F/D/G series, escape and hitting probabilities,
cutpoint probabilities and the transience / cutpoint-finiteness criteria.

Series conventions (all start with the term 1):

    F_Y(m) = 1 + sum_{j>m} zeta_{m+1}..zeta_j            (zeta tails)
    G(m)   = 1 + sum_{j>m} 1/(theta_{m+1}..theta_j)       (theta tails)
    D_X(n) = 1 + sum_{j>n} rho_{n+1}..rho_j,   D_Y with 1/rho
    F_X(m) = 1 + sum_{s>m} e1 A_s..A_{m+1} e1'

The first four are "ratio series" S(m) = 1 + r_{m+1} S(m+1).  F_X obeys
F_X(m-1) = 1 + a_m F_X(m) + b_{m+1} F_X(m+1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import contfrac, matprod
from .env import ConstantEnvironment, EnvError, roots

DEFAULT_TOL = 1e-12
TERM_CAP = 10**8
FAR_FACTOR = 200
CRITICAL_EPS = 1e-9
CHUNK = 1 << 16
POWER_MARGIN = 1.25
SERIES = ("F_X", "F_Y", "G", "D_X", "D_Y")


# ------------------------------------------------------------------ results

@dataclass(frozen=True)
class SeriesResult:
    """A positive series evaluated to ``terms_used`` terms.

    ``value`` is the partial sum, hence a lower bound.  ``tail_bound`` is a
    rigorous bound on the omitted tail unless ``heuristic`` is set, in which
    case it is an estimate of the tail.  When ``diverged`` the value is a
    partial sum only.
    """

    value: float
    terms_used: int
    tail_bound: float
    diverged: bool = False
    heuristic: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def estimate(self):
        """Best point estimate: partial sum plus the estimated tail."""
        if self.diverged:
            return math.inf
        return self.value + (self.tail_bound if self.heuristic else 0.0)


@dataclass(frozen=True)
class EscapeSplit:
    q_low: float    # exit at n
    q_high: float   # exit at n + 1
    q_plus: float


@dataclass(frozen=True)
class Profile:
    """Series values S(j) for j = lo..hi; ``tail`` holds the estimated omitted tail."""

    which: str
    lo: int
    values: np.ndarray
    tail: np.ndarray
    diverged: bool
    heuristic: bool
    far: int

    def at(self, j):
        return float(self.values[j - self.lo] + self.tail[j - self.lo])

    @property
    def estimate(self):
        return self.values + self.tail


@dataclass(frozen=True)
class LayerCut:
    """Layer-cutpoint probability of Y: exact value, bracket and asymptotic form."""

    k: int
    exact: float
    lower: float
    upper: float
    asym: float
    meta: dict = field(default_factory=lambda: {"asym": "approximation"})


# ------------------------------------------------------------ ratio helpers

def _limit_ratio(env, which):
    rho, _ = roots(env.a_limit, env.b_limit)
    return rho if which in ("F_X", "G", "D_X") else 1.0 / rho


def _ratios(env, which, lo, hi, tol):
    """r_j for j in [lo, hi) for the ratio series."""
    if which == "F_Y":
        return matprod.zeta_tails(env, lo, hi - 1, tol=tol)
    if which == "G":
        return 1.0 / matprod.theta_tails(env, lo, hi - 1, tol=tol)
    rho = env.rho(lo, hi)
    return rho if which == "D_X" else 1.0 / rho


def _check_which(which):
    if which not in SERIES:
        raise ValueError(f"unknown series {which!r}; expected one of {SERIES}")


def _finite_ratio_series(env, which, m, n, tol):
    """1 + sum_{j=m+1}^{n-1} prod_{i=m+1}^{j} r_i, exactly (in log space)."""
    if n <= m + 1:
        return SeriesResult(1.0, 1, 0.0)
    r = _ratios(env, which, m + 1, n, tol)
    logs = np.concatenate(([0.0], np.cumsum(np.log(r))))
    top = logs.max()
    value = math.exp(top) * float(np.exp(logs - top).sum())
    return SeriesResult(value, n - m, 0.0)


@nb.njit(cache=True)
def _fx_terms(a, b, rho_prev, t_prev):
    """Continue t_j = rho_j t_{j-1}, rho_j = a_j + b_j/rho_{j-1} over a chunk."""
    n = a.shape[0]
    rho = np.empty(n)
    t = np.empty(n)
    for i in range(n):
        r = a[i] + b[i] / rho_prev if rho_prev > 0 else a[i]
        rho[i] = r
        t_prev = t_prev * r
        t[i] = t_prev
        rho_prev = r
    return rho, t


def _finite_F_X(env, m, n):
    """F_X(m, n) through the term ratios (log space, no overflow)."""
    if n <= m + 1:
        return SeriesResult(1.0, 1, 0.0)
    logt = _fx_logterms(env, m, n)
    top = logt.max()
    return SeriesResult(math.exp(top) * float(np.exp(logt - top).sum()), n - m, 0.0)


def _fx_logterms(env, m, n):
    """log of the terms z_{m+1,s} for s = m..n-1 (s = m is the leading 1)."""
    a, b = env.coeffs(m + 1, n)
    rho = np.empty(len(a))
    r = 0.0
    for i in range(len(a)):
        r = a[i] + (b[i] / r if r > 0 else 0.0)
        rho[i] = r
    return np.concatenate(([0.0], np.cumsum(np.log(rho))))


def _chunk_end(env, j):
    """End of the next summation chunk, clamped to a table's last site."""
    end = j + CHUNK
    if env.max_site is not None:
        end = min(end, env.max_site + 1)
        if end <= j:
            raise EnvError(f"series not converged before the table end (site {env.max_site})")
    return end


def _geometric_ratio_series(env, which, m, tol, term_cap):
    """Forward summation for a tail ratio limit < 1."""
    constant = isinstance(env, ConstantEnvironment)
    lim = _limit_ratio(env, which)
    total, log_t, j = 1.0, 0.0, m + 1
    used = 1
    while used < term_cap:
        r = _ratios(env, which, j, _chunk_end(env, j), tol)
        logs = log_t + np.cumsum(np.log(r))
        terms = np.exp(logs)
        partial = total + np.cumsum(terms)
        s = r if constant else np.maximum(np.maximum.accumulate(r[::-1])[::-1], lim)
        with np.errstate(divide="ignore"):
            bound = np.where(s < 1.0, terms * s / (1.0 - s), np.inf)
        done = np.nonzero(bound < tol * partial)[0]
        if done.size:
            i = int(done[0])
            return SeriesResult(float(partial[i]), used + i + 1, float(bound[i]),
                                heuristic=not constant)
        total, log_t = float(partial[-1]), float(logs[-1])
        used += len(r)
        j += len(r)
    return SeriesResult(total, used, math.nan, heuristic=True,
                        meta={"reason": "term cap reached"})


def _geometric_F_X(env, m, tol, term_cap):
    constant = isinstance(env, ConstantEnvironment)
    lim = _limit_ratio(env, "F_X")
    total, t, rho_prev, j, used = 1.0, 1.0, 0.0, m + 1, 1
    prev_ratio = None
    while used < term_cap:
        a, b = env.coeffs(j, _chunk_end(env, j))
        rho, terms = _fx_terms(a, b, rho_prev, t)
        partial = total + np.cumsum(terms)
        # ratios alternate around their limit, so two consecutive ones bound the rest
        before = np.concatenate(([prev_ratio if prev_ratio is not None else rho[0]], rho[:-1]))
        s = np.maximum(rho, before)
        if not constant:
            s = np.maximum(s, lim)
        with np.errstate(divide="ignore"):
            bound = np.where(s < 1.0, terms * s / (1.0 - s), np.inf)
        done = np.nonzero(bound < tol * partial)[0]
        if done.size:
            i = int(done[0])
            return SeriesResult(float(partial[i]), used + i + 1, float(bound[i]),
                                heuristic=not constant)
        total, t, rho_prev, prev_ratio = float(partial[-1]), float(terms[-1]), float(rho[-1]), float(rho[-1])
        used += len(a)
        j += len(a)
    return SeriesResult(total, used, math.nan, heuristic=True,
                        meta={"reason": "term cap reached"})


def _diverged(env, which, m, tol):
    """Partial sum of the first 64 terms, flagged as diverged."""
    n = m + 65
    if env.max_site is not None:
        n = min(n, env.max_site)
    part = _finite_F_X(env, m, n) if which == "F_X" else _finite_ratio_series(env, which, m, n, tol)
    return SeriesResult(part.value, part.terms_used, math.inf, diverged=True)


def series(env, which, m, n=None, tol=DEFAULT_TOL, term_cap=TERM_CAP, far_factor=FAR_FACTOR):
    """Evaluate one of the five series at base index m, to n (exclusive) or infinity."""
    _check_which(which)
    if m < 1:
        raise ValueError("m must be >= 1")
    if n is not None:
        if n < m + 1:
            raise ValueError("need n >= m + 1")
        if which == "F_X":
            return _finite_F_X(env, m, n)
        return _finite_ratio_series(env, which, m, n, tol)
    lim = _limit_ratio(env, which)
    if lim > 1.0 + CRITICAL_EPS or (isinstance(env, ConstantEnvironment) and lim >= 1.0 - CRITICAL_EPS):
        return _diverged(env, which, m, tol)
    if lim < 1.0 - CRITICAL_EPS:
        if which == "F_X":
            return _geometric_F_X(env, m, tol, term_cap)
        return _geometric_ratio_series(env, which, m, tol, term_cap)
    prof = profile(env, which, m, m, tol=tol, far_factor=far_factor)
    return SeriesResult(float(prof.values[0]), prof.far - m, float(prof.tail[0]),
                        diverged=prof.diverged, heuristic=True,
                        meta={"far_boundary": prof.far})


def series_F_X(env, m, n=None, tol=DEFAULT_TOL, **kw):
    return series(env, "F_X", m, n, tol, **kw)


def series_F_Y(env, m, n=None, tol=DEFAULT_TOL, **kw):
    return series(env, "F_Y", m, n, tol, **kw)


def series_G(env, m, n=None, tol=DEFAULT_TOL, **kw):
    return series(env, "G", m, n, tol, **kw)


def series_D(env, kind, n, tol=DEFAULT_TOL, **kw):
    """D_X(n) or D_Y(n) (kind 'X' or 'Y')."""
    kind = kind.upper()
    if kind not in ("X", "Y"):
        raise ValueError("kind must be 'X' or 'Y'")
    return series(env, "D_" + kind, n, None, tol, **kw)


# ----------------------------------------------------------------- profiles

@nb.njit(cache=True)
def _sweep_ratio(mode, a, b, b_next, base, lo, state, out_s, out_logp):
    """Backward sweep over sites base+len(a)-1 .. base.

    state = [tail ratio carried from above, S0, logP].  At site j the ratio
    r_j is formed, then S0(j-1) = 1 + r_j S0(j) and logP(j-1) = logP(j) + log r_j
    are written to out[j-1-lo] when j-1 >= lo.
    """
    zt, s0, logp = state[0], state[1], state[2]
    for i in range(a.shape[0] - 1, -1, -1):
        j = base + i
        if mode == 0:
            zt = 1.0 / (a[i] + b[i] * zt)
            r = zt
        elif mode == 1:
            zt = 1.0 / (a[i] + b_next[i] * zt)
            r = 1.0 / zt
        else:
            rho = 0.5 * (a[i] + math.sqrt(a[i] * a[i] + 4.0 * b[i]))
            r = rho if mode == 2 else 1.0 / rho
        s0 = 1.0 + r * s0
        logp = logp + math.log(r)
        idx = j - 1 - lo
        if 0 <= idx < out_s.shape[0]:
            out_s[idx] = s0
            out_logp[idx] = logp
    state[0], state[1], state[2] = zt, s0, logp


@nb.njit(cache=True)
def _sweep_fx(a, b_next, base, lo, state, out_f, out_h1, out_h2):
    """F(m-1) = 1 + a_m F(m) + b_{m+1} F(m+1) and the two homogeneous solutions.

    state = [F(m), F(m+1), H1(m), H1(m+1), H2(m), H2(m+1)] at m = top of chunk.
    """
    f0, f1, g0, g1, h0, h1 = state[0], state[1], state[2], state[3], state[4], state[5]
    for i in range(a.shape[0] - 1, -1, -1):
        j = base + i
        fn = 1.0 + a[i] * f0 + b_next[i] * f1
        gn = a[i] * g0 + b_next[i] * g1
        hn = a[i] * h0 + b_next[i] * h1
        f1, f0 = f0, fn
        g1, g0 = g0, gn
        h1, h0 = h0, hn
        idx = j - 1 - lo
        if 0 <= idx < out_f.shape[0]:
            out_f[idx] = f0
            out_h1[idx] = g0
            out_h2[idx] = h0
    state[0], state[1], state[2], state[3], state[4], state[5] = f0, f1, g0, g1, h0, h1


def _far_seed(r_far, far):
    """Estimate of S(far) - 1 = sum_{j>far} prod r for slowly varying ratios.

    Geometric when r is bounded away from 1, else the power law
    prod r ~ (far/j)^p with p = far (1 - r).  Returns inf when not summable.
    """
    if r_far < 1.0 - 1e-3:
        return r_far / (1.0 - r_far)
    p = far * (1.0 - r_far)
    if p <= 1.0:
        return math.inf
    return far / (p - 1.0)


def profile(env, which, lo, hi, tol=DEFAULT_TOL, far_factor=FAR_FACTOR, far=None):
    """Series values S(j), j = lo..hi, from one backward sweep.

    The sweep starts at a far boundary N (default far_factor * hi, or hi plus a
    geometric depth when the ratio limit is < 1).  ``values`` are the exact
    sums truncated at N (lower bounds); ``tail`` is the estimated contribution
    beyond N, always flagged heuristic.
    """
    _check_which(which)
    if lo < 1 or hi < lo:
        raise ValueError("need 1 <= lo <= hi")
    lim = _limit_ratio(env, which)
    if far is None:
        if lim < 1.0 - CRITICAL_EPS:
            depth = int(math.ceil(math.log(tol * 1e-3) / math.log(lim))) + 64
            far = hi + depth
        else:
            far = max(far_factor * hi, hi + 10**4)
    far = int(far)
    if env.max_site is not None and far > env.max_site - 1:
        raise ValueError("profile needs sites past the end of a table environment")
    n_out = hi - lo + 1
    if lim > 1.0 + CRITICAL_EPS or (isinstance(env, ConstantEnvironment)
                                    and lim >= 1.0 - CRITICAL_EPS):
        return Profile(which, lo, np.full(n_out, np.nan), np.full(n_out, np.inf),
                       True, False, far)
    out_s = np.empty(n_out)
    aux1 = np.empty(n_out)
    aux2 = np.empty(n_out)
    diverged = False

    if which == "F_X":
        # F(far-1) = 1, F(far) = 0 gives F_X(m, far); homogeneous pair seeded (1,0), (0,1)
        state = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
        top = far - 1
        while top > lo:
            base = max(lo + 1, top - CHUNK + 1)
            a, _ = env.coeffs(base, top + 1)
            _, b_next = env.coeffs(base + 1, top + 2)
            _sweep_fx(a, b_next, base, lo, state, out_s, aux1, aux2)
            top = base - 1
        if lo == far - 1:
            out_s[0], aux1[0], aux2[0] = 1.0, 1.0, 0.0
        a_f, b_f = env.coeffs(far, far + 1)
        rho_f, sig_f = roots(a_f[0], b_f[0])
        d_seed = 1.0 + _far_seed(rho_f, far)
        f_seed = d_seed / (1.0 - sig_f)
        if not math.isfinite(f_seed):
            diverged = True
            tail = np.full(n_out, math.inf)
        else:
            tail = (f_seed - 1.0) * aux1 + f_seed * aux2
    else:
        mode = {"F_Y": 0, "G": 1, "D_X": 2, "D_Y": 3}[which]
        seed_ratio = 0.0
        if which == "F_Y":
            seed_ratio = matprod.zeta_tail(env, far + 1, tol=tol)
        elif which == "G":
            seed_ratio = matprod.theta_tail(env, far + 1, tol=tol)
        # S0(far) = 1: the truncated sum stops at j = far
        state = np.array([seed_ratio, 1.0, 0.0])
        top = far
        while top > lo:
            base = max(lo + 1, top - CHUNK + 1)
            a, b = env.coeffs(base, top + 1)
            _, b_next = env.coeffs(base + 1, top + 2)
            _sweep_ratio(mode, a, b, b_next, base, lo, state, out_s, aux1)
            top = base - 1
        if lo == far:
            out_s[0], aux1[0] = 1.0, 0.0
        r_far = float(_ratios(env, which, far, far + 1, tol)[0]) if which in ("D_X", "D_Y") \
            else (seed_ratio if which == "F_Y" else 1.0 / seed_ratio)
        seed = _far_seed(r_far, far)
        if not math.isfinite(seed):
            diverged = True
            tail = np.full(n_out, math.inf)
        else:
            # tail = prod_{i=j+1}^{far} r_i * (S(far) - 1)
            tail = np.exp(aux1) * seed
    return Profile(which, lo, out_s, tail, diverged, True, far)


# ------------------------------------------------------------- escape probs

@nb.njit(cache=True)
def _escape_y_kernel(a, b, k_idx):
    """Closed-form split for Y on (m, n).  Arrays hold sites m+1 .. n-1.

    k_idx is the position of k.  Returns (q_plus, q_high).  All sums are
    scaled by exp(-M) where M is the largest log term; the cross term of
    the n+1 component is written with two-point Casoratians so that no
    difference of large numbers is formed.
    """
    L = a.shape[0]                      # sites m+1 .. N' with N' = n-1
    z = np.zeros(L + 2)                 # zeta_{i,N'}; z[L] = z[L+1] = 0
    for i in range(L - 1, -1, -1):
        z[i] = 1.0 / (a[i] + b[i] * z[i + 1])
    om = np.zeros(L + 2)                # omega_s = y_{s,N'-1}/y_{s,N'}
    om[L - 1] = 1.0 / a[L - 1]
    for i in range(L - 2, -1, -1):
        om[i] = z[i] * (a[i] * om[i + 1] + b[i] * z[i + 1] * om[i + 2])
    logy = np.empty(L)                  # log y_{s,N'}
    acc = 0.0
    for i in range(L - 1, -1, -1):
        acc -= math.log(z[i])
        logy[i] = acc
    M = 0.0
    for i in range(L):
        if logy[i] > M:
            M = logy[i]
    bN = b[L - 1]
    s1k = 0.0
    s2k = 0.0
    s1all = 0.0
    for i in range(L):
        w = math.exp(logy[i] - M)
        s1all += w
        if i <= k_idx:
            s1k += w
            s2k += w * bN * om[i]
    den = math.exp(-M) + s1all
    q_plus = s1k / den
    # cross term: sum_{t=k+1}^{N'} C_{t-1} sum_{s<=k} y_{s,t-2} with
    # C_j = prod_{i=j}^{N'} (-b_i).  Position ti holds site t.
    cross = 0.0
    logc = math.log(b[L - 1])
    zt = np.empty(L)
    for ti in range(L - 1, k_idx, -1):
        logc += math.log(b[ti - 1])               # |C_{t-1}| = prod b over ti-1 .. L-1
        sign = -1.0 if (L - ti + 1) % 2 == 1 else 1.0
        inner = 0.0
        if ti - 1 <= k_idx:                       # y_{t-1,t-2} = 1
            inner += math.exp(logc - M)
        x = 0.0
        ly = 0.0
        for i in range(ti - 2, -1, -1):           # zeta_{i,t-2}, backward
            x = 1.0 / (a[i] + b[i] * x)
            ly -= math.log(x)
            if i <= k_idx:
                inner += math.exp(logc + ly - M)
        cross += sign * inner
    q_high = (s2k - cross) / den
    return q_plus, q_high


def escape_Y_split(env, m, k, n):
    """(Q^n_k, Q^{n+1}_k, Q_k(+)) for Y on the interval (m, n)."""
    if m < 1 or n < m + 2:
        raise ValueError("need 1 <= m and n >= m + 2")
    if k <= m:
        return EscapeSplit(0.0, 0.0, 0.0)
    if k == n:
        return EscapeSplit(1.0, 0.0, 1.0)
    if k == n + 1:
        return EscapeSplit(0.0, 1.0, 1.0)
    if k > n + 1:
        raise ValueError("k must be <= n + 1")
    a, b = env.coeffs(m + 1, n)
    q_plus, q_high = _escape_y_kernel(a, b, k - m - 1)
    q_high = min(max(q_high, 0.0), q_plus)
    return EscapeSplit(max(q_plus - q_high, 0.0), q_high, q_plus)


def escape_Y_to_inf(env, m, tol=DEFAULT_TOL):
    """Probability that Y started at m+1 never hits [0, m]: 1/F_Y(m)."""
    f = series_F_Y(env, m, tol=tol)
    return 0.0 if f.diverged else 1.0 / f.estimate


def escape_X_down(env, m, k, n):
    """P(X hits [0, m] before [n, inf) | X_0 = k), 1 <= m < k < n."""
    if not 1 <= m < k < n:
        raise ValueError("need 1 <= m < k < n")
    logt = _fx_logterms(env, m, n)         # s = m .. n-1
    top = logt.max()
    w = np.exp(logt - top)
    return float(w[k - m:].sum() / w.sum())


def escape_X_never_return(env, n, tol=DEFAULT_TOL):
    """P(X started at n+1 never hits [0, n]) = 1/F_X(n)."""
    f = series_F_X(env, n, tol=tol)
    return 0.0 if f.diverged else 1.0 / f.estimate


def escape_X_return(env, n, tol=DEFAULT_TOL):
    """P_{n+1}(n, inf, -) = 1 - 1/F_X(n)."""
    return 1.0 - escape_X_never_return(env, n, tol)


def return_prob_Y(env, K, x, F_K=None, tol=DEFAULT_TOL):
    """P(Y started at x > K ever hits [0, K]) = 1 - F_Y(K, x)/F_Y(K)."""
    if x <= K:
        return 1.0
    if F_K is None:
        f = series_F_Y(env, K, tol=tol)
        if f.diverged:
            return 1.0
        F_K = f.estimate
    return max(0.0, 1.0 - series_F_Y(env, K, x + 0, tol=tol).value / F_K) if x > K + 1 \
        else max(0.0, 1.0 - 1.0 / F_K)


def return_prob_X(env, K, x, F_K=None, tol=DEFAULT_TOL):
    """P(X started at x > K ever hits [0, K]) = 1 - F_X(K, x)/F_X(K)."""
    if x <= K:
        return 1.0
    if F_K is None:
        f = series_F_X(env, K, tol=tol)
        if f.diverged:
            return 1.0
        F_K = f.estimate
    return max(0.0, 1.0 - series_F_X(env, K, x).value / F_K) if x > K + 1 \
        else max(0.0, 1.0 - 1.0 / F_K)


# ------------------------------------------------------------ hitting probs

def eta_seq(env, k):
    """eta_{j,j}(2) for j = 1..k (position j-1); eta_{1,1}(2) = 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = np.zeros(k)
    if k >= 2:
        a, b = env.coeffs(2, k + 1)
        x = 0.0
        for i in range(len(a)):
            x = b[i] / (a[i] + x)
            out[i + 1] = x
    return out


def eta_diag(env, k):
    """eta_{k,k}(2): from k, first entry into [k+1, inf) is at k+2."""
    return float(eta_seq(env, k)[-1])


def h_layer_seq(env, k):
    """h_j(2) for j = 1..k (position j-1) by the layer recursion."""
    eta = eta_seq(env, 2 * k + 1)           # eta[j-1] = eta_{j,j}(2)
    out = np.zeros(k)
    h = 0.0
    for j in range(1, k):
        e0, e1 = eta[2 * j - 1], eta[2 * j]
        h = h * e0 * e1 + (1.0 - e0) * e1
        out[j] = h
    return out


def h_layer(env, k):
    """(h_k(1), h_k(2)): layer L_k = {2k, 2k+1} is first entered at 2k resp. 2k+1."""
    h2 = float(h_layer_seq(env, k)[-1])
    return 1.0 - h2, h2


def skip_seq(env, n):
    """g_j = P(Y from 2 first enters [j, inf) at j+1), j = 2..n (position j-2)."""
    eta = eta_seq(env, max(n - 1, 1))
    out = np.zeros(n - 1)
    g = 0.0
    for j in range(3, n + 1):
        g = (1.0 - g) * eta[j - 2]
        out[j - 2] = g
    return out


# ---------------------------------------------------------- cutpoint probs

def p_cut_X(env, k, tol=DEFAULT_TOL):
    """P(k is visited exactly once by X) = q_k / F_X(k)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    f = series_F_X(env, k, tol=tol)
    if f.diverged:
        return 0.0
    q = float(env.law(k, k + 1)[0][0])
    return q / f.estimate


def p_cut_X_joint(env, j, k, tol=DEFAULT_TOL):
    """P(j and k both cutpoints of X) = q_j q_k / (F_X(j,k) F_X(k)), 2 <= j < k."""
    if not 2 <= j < k:
        raise ValueError("need 2 <= j < k")
    f = series_F_X(env, k, tol=tol)
    if f.diverged:
        return 0.0
    q = env.law(j, k + 1)[0]
    return float(q[0] * q[-1] / (series_F_X(env, j, k).value * f.estimate))


def p_cut_layer_Y(env, k, tol=DEFAULT_TOL, far_factor=FAR_FACTOR):
    """Layer-cutpoint probability of Y for L_k = {2k, 2k+1}.

    exact = h_k(1) eta_{2k,2k}(2)/F_Y(2k+1) + h_k(2)/F_Y(2k); the bracket
    replaces both F values by their max / min; asym = (-2 sigma/(1-sigma))/F_Y(2k).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    lim = env.limits()
    f0 = series_F_Y(env, 2 * k, tol=tol, far_factor=far_factor)
    if f0.diverged:
        return LayerCut(k, 0.0, 0.0, 0.0, 0.0)
    f1 = series_F_Y(env, 2 * k + 1, tol=tol, far_factor=far_factor)
    F0, F1 = f0.estimate, f1.estimate
    h1, h2 = h_layer(env, k)
    eta = eta_diag(env, 2 * k)
    head = h1 * eta + h2
    exact = h1 * eta / F1 + h2 / F0
    asym = (-2.0 * lim.sigma / (1.0 - lim.sigma)) / F0
    return LayerCut(k, exact, head / max(F0, F1), head / min(F0, F1), asym)


def p_cut_layer_Y_asym(env, k, tol=DEFAULT_TOL):
    """Alias returning the full :class:`LayerCut` record (asym plus exact bracket)."""
    return p_cut_layer_Y(env, k, tol)


def expected_cutpoints_X(env, n_grid, far_factor=FAR_FACTOR):
    """E S_n = sum_{k=2}^{n} q_k / F_X(k) on a grid of n (exact up to F tails)."""
    n_grid = np.asarray(n_grid, dtype=np.int64)
    hi = int(n_grid.max())
    if isinstance(env, ConstantEnvironment) or _limit_ratio(env, "F_X") < 1 - CRITICAL_EPS:
        prof = profile(env, "F_X", 2, hi)
    else:
        prof = profile(env, "F_X", 2, hi, far_factor=far_factor)
    if prof.diverged:
        return np.zeros(len(n_grid))
    q = env.law(2, hi + 1)[0]
    cum = np.cumsum(q / prof.estimate)
    return cum[n_grid - 2]


def expected_cutpoints_Y(env, n_grid, far_factor=FAR_FACTOR):
    """E S_n for Y per site: sum_{k=3}^{n} g_k / F_Y(k); site 2 is always visited."""
    n_grid = np.asarray(n_grid, dtype=np.int64)
    hi = int(n_grid.max())
    prof = profile(env, "F_Y", 2, hi, far_factor=far_factor)
    if prof.diverged:
        return np.zeros(len(n_grid))
    g = skip_seq(env, hi)                   # g_j, j = 2..hi
    cum = np.cumsum(g / prof.estimate)
    return cum[n_grid - 2]


# ---------------------------------------------------------------- criteria

@dataclass(frozen=True)
class Transience:
    verdict: str              # transient | recurrent | inconclusive
    decisive: bool
    method: str
    witness: float


def transient(env, kind, tol=DEFAULT_TOL):
    """Classify X (sum of rho products) or Y (sum of inverse rho products)."""
    kind = kind.upper()
    which = "D_" + kind
    lim = _limit_ratio(env, which)
    if lim < 1.0 - CRITICAL_EPS:
        return Transience("transient", True, "geometric", lim)
    if lim > 1.0 + CRITICAL_EPS or isinstance(env, ConstantEnvironment):
        return Transience("recurrent", True, "geometric", lim)
    # near-critical: power comparison p_j = j (1 - r_j) on a log grid
    grid = np.unique(np.logspace(3, 8, 11).astype(np.int64))
    r = np.array([_ratios(env, which, int(j), int(j) + 1, tol)[0] for j in grid])
    p = grid * (1.0 - r)
    # the excess p - 1 may decay like an iterated log, so no monotonicity is asked
    if np.all(p >= POWER_MARGIN):
        return Transience("transient", False, "power comparison", float(p.min()))
    if np.all(p <= 1.0):
        return Transience("recurrent", False, "harmonic comparison", float(p.max()))
    return Transience("inconclusive", False, "power comparison", float(p[-1]))


def _log_grid(lo, hi, per_decade=8):
    pts = np.logspace(math.log10(lo), math.log10(hi), int(per_decade * math.log10(hi / lo)) + 1)
    return np.unique(np.round(pts).astype(np.int64))


def cutpoint_criterion(env, kind, N_max, far_factor=FAR_FACTOR, margin=0.25):
    """Diagnostic for the finiteness criterion sum 1/(D_Z(n) log n) < inf.

    The terms are fitted first as n^-gamma; when gamma is near 1 the
    iterated-log exponent kappa of n log n (log log n)^kappa is fitted.
    """
    if N_max < 100:
        raise ValueError("N_max must be >= 100")
    kind = kind.upper()
    prof = profile(env, "D_" + kind, 2, int(N_max), far_factor=far_factor)
    n = np.arange(2, int(N_max) + 1)
    if prof.diverged:
        return {"kind": kind, "prediction": "recurrent", "partial_sums": [],
                "diverged_D": True}
    D = prof.estimate
    terms = 1.0 / (D * np.log(n))
    partial = np.cumsum(terms)
    grid = _log_grid(10, N_max)
    sel = grid - 2
    top = grid[grid >= math.sqrt(10 * N_max)]
    ts = terms[top - 2]
    gamma = -np.polyfit(np.log(top), np.log(ts), 1)[0]
    kappa = None
    if gamma < 1 - margin:
        prediction = "infinite"
    elif gamma > 1 + margin:
        prediction = "finite"
    else:
        y = np.log(ts * top * np.log(top))
        kappa = -np.polyfit(np.log(np.log(np.log(top))), y, 1)[0]
        prediction = "finite" if kappa > 1 + margin else ("infinite" if kappa < 1 - margin
                                                          else "inconclusive")
    # side condition D(n) <= delta n log n: ratio must not grow on the top half
    side = D[top - 2] / (top * np.log(top))
    side_ok = bool(side[-1] <= side[0] * 1.1)
    if prediction == "infinite" and not side_ok:
        prediction = "inconclusive"
    rho = env.rho(2, int(N_max) + 1)
    n0 = int(env.meta.get("n0", 2))
    tail = rho[max(n0 - 2, 0):]
    d = np.diff(tail)
    monotone = bool(np.all(d >= -1e-15) if kind == "X" else np.all(d <= 1e-15))
    return {
        "kind": kind,
        "grid": grid.tolist(),
        "partial_sums": partial[sel].tolist(),
        "gamma": float(gamma),
        "kappa": None if kappa is None else float(kappa),
        "prediction": prediction,
        "rho_monotone": monotone,
        "side_condition_ok": side_ok,
        "side_ratio_max": float(side.max()),
        "far_boundary": prof.far,
    }


def tau(env):
    return env.limits().tau
