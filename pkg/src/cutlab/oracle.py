"""Independent ground truth: first-step linear systems and naive Monte Carlo.

Nothing here uses the matrix-product or continued-fraction machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _walk
from .env import Environment

MAX_STATES = 10**4
CHECK_TOL = 1e-10

CLASSES = {
    "Y": ("down", "exit_n", "exit_n1"),      # hit <= m, exit at n, exit at n+1
    "X": ("exit_m", "exit_m1", "up"),        # land at m, land at m-1, reach >= n
}


@dataclass(frozen=True, eq=False)
class AbsorptionProblem:
    env: Environment
    kind: str
    m: int
    n: int

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in CLASSES:
            raise ValueError("kind must be 'X' or 'Y'")
        if self.m < 1 or self.n - self.m < 2:
            raise ValueError("need m >= 1 and n - m >= 2")
        if self.n - self.m - 1 > MAX_STATES:
            raise ValueError(f"interval too long for the oracle (> {MAX_STATES} states)")

    @property
    def states(self):
        return np.arange(self.m + 1, self.n)


@dataclass(frozen=True)
class AbsorptionResult:
    problem: AbsorptionProblem
    probs: np.ndarray           # (states, 3) class probabilities

    def at(self, k):
        """Class probabilities from interior state k as a dict."""
        row = self.probs[k - self.problem.m - 1]
        return dict(zip(CLASSES[self.problem.kind], map(float, row)))


@nb.njit(cache=True)
def band_solve(ab, lower, upper, rhs):
    """Solve a banded system by Gaussian elimination without pivoting.

    ``ab`` uses LAPACK band storage: ab[upper + i - j, j] = A[i, j].
    ``rhs`` has shape (n, r).  Inputs are copied.
    """
    ab = ab.copy()
    x = rhs.copy()
    n = ab.shape[1]
    for k in range(n):
        piv = ab[upper, k]
        if piv == 0.0:
            raise ZeroDivisionError("zero pivot in band elimination")
        for i in range(k + 1, min(n, k + lower + 1)):
            f = ab[upper + i - k, k] / piv
            if f == 0.0:
                continue
            for j in range(k, min(n, k + upper + 1)):
                ab[upper + i - j, j] -= f * ab[upper + k - j, j]
            for c in range(x.shape[1]):
                x[i, c] -= f * x[k, c]
    for k in range(n - 1, -1, -1):
        for c in range(x.shape[1]):
            s = x[k, c]
            for j in range(k + 1, min(n, k + upper + 1)):
                s -= ab[upper + k - j, j] * x[j, c]
            x[k, c] = s / ab[upper, k]
    return x


def _system(problem):
    """Band matrix of I - T and absorbing right-hand sides."""
    m, n = problem.m, problem.n
    q, p1, p2 = problem.env.law(m + 1, n)
    if np.any(np.abs(q + p1 + p2 - 1.0) > CHECK_TOL):
        raise ArithmeticError("transition rows do not sum to 1")
    size = n - m - 1
    if problem.kind == "Y":
        lower, upper = 1, 2
        moves = ((-1, q), (1, p1), (2, p2))
    else:
        lower, upper = 2, 1
        moves = ((1, q), (-1, p1), (-2, p2))
    ab = np.zeros((lower + upper + 1, size))
    ab[upper, :] = 1.0
    rhs = np.zeros((size, 3))
    for i in range(size):
        x = m + 1 + i
        for d, p in moves:
            y = x + d
            pr = p[i]
            if m < y < n:
                ab[upper + i - (y - m - 1), y - m - 1] -= pr
            elif problem.kind == "Y":
                rhs[i, 0 if y <= m else (1 if y == n else 2)] += pr
            else:
                rhs[i, 2 if y >= n else (0 if y == m else 1)] += pr
    return ab, lower, upper, rhs


def absorption_solve(problem):
    """Per-state probabilities of the three absorbing classes."""
    ab, lower, upper, rhs = _system(problem)
    probs = band_solve(ab, lower, upper, rhs)
    if np.any(probs < -CHECK_TOL) or np.any(probs > 1 + CHECK_TOL):
        raise ArithmeticError("absorption probabilities outside [0, 1]")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > CHECK_TOL):
        raise ArithmeticError("class probabilities do not sum to 1")
    return AbsorptionResult(problem, probs)


def never_return(env, kind, n, tol=1e-10, guard0=64, max_states=MAX_STATES):
    """P(walk started at n+1 never hits [0, n]) by a receding upper guard.

    The guard doubles until the answer changes by less than ``tol``.
    Returns (value, guard, converged).
    """
    kind = kind.upper()
    guard = n + guard0
    prev = None
    while True:
        res = absorption_solve(AbsorptionProblem(env, kind, n, guard)).at(n + 1)
        val = res["up"] if kind == "X" else res["exit_n"] + res["exit_n1"]
        if prev is not None and abs(val - prev) < tol:
            return val, guard, True
        if guard - n >= max_states // 2:
            return val, guard, False
        prev = val
        guard = n + 2 * (guard - n)


# ---------------------------------------------------------------- Monte Carlo

@nb.njit(cache=True)
def _mc_escape(kind, m, k, n, trials, seed, cq, cqp):
    hits = 0
    k0 = np.uint64(seed)
    for t in range(trials):
        st = _walk.new_state()
        k1 = np.uint64(t)
        x = k
        while m < x < n:
            x = _walk.step(kind, x, st, k0, k1, cq, cqp)
        if kind == 1:
            if x >= n:
                hits += 1
        elif x <= m:
            hits += 1
    return hits


def mc_escape_estimate(env, kind, m, k, n, trials, seed):
    """Frequency of escaping upwards (Y) or downwards (X) from (m, n).

    Returns (estimate, 3-sigma binomial half-width).
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    if not 1 <= m < k < n:
        raise ValueError("need 1 <= m < k < n")
    code = _walk.kind_code(kind)
    cq, cqp = _walk.thresholds(env, n + 2)
    hits = _mc_escape(code, m, k, n, int(trials), int(seed), cq, cqp)
    p = hits / trials
    return p, 3.0 * math.sqrt(max(p * (1 - p), 1e-300) / trials)


@nb.njit(cache=True)
def _mc_return(kind, n, horizon, trials, seed, cq, cqp):
    returned = 0
    k0 = np.uint64(seed)
    for t in range(trials):
        st = _walk.new_state()
        k1 = np.uint64(t)
        x = n + 1
        for _ in range(horizon):
            x = _walk.step(kind, x, st, k0, k1, cq, cqp)
            if x <= n:
                returned += 1
                break
    return returned


def mc_return_frequency(env, kind, n, horizon, trials, seed):
    """Fraction of walks started at n+1 that hit [0, n] within ``horizon`` steps.

    One minus this is the horizon-truncated never-return estimate; it is
    biased upwards by returns later than the horizon.  Returns
    (frequency, 3-sigma half-width).
    """
    code = _walk.kind_code(kind)
    cq, cqp = _walk.thresholds(env, n + 2 * int(horizon) + 3)
    r = _mc_return(code, int(n), int(horizon), int(trials), int(seed), cq, cqp)
    p = r / trials
    return p, 3.0 * math.sqrt(max(p * (1 - p), 1e-300) / trials)
