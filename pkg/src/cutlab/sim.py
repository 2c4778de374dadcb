"""Trajectory simulation of X and Y with a certified cutpoint census.

A census with ceiling K needs the visit counts of sites <= K to be final.
Two ways of stopping a trajectory are supported:

* ``margin``: walk until the first position >= K + W, where W is the smallest
  margin whose formula return probability below K is < eps_conf.  The
  census is then exact up to that probability (``eps_cens``).
* ``resample``: the first time the walk exceeds K, draw whether it ever comes
  back (exact return probability).  If it does, jump straight to its landing
  site (K for Y; K or K-1 for X) and keep walking.  Sites above K are never
  counted, so the census is exact in law.  This is the only affordable
  option for near-critical walks, whose return probabilities decay like
  powers of the distance.

``auto`` takes the margin when W <= ``w_cap`` and otherwise resamples.
Trajectory t uses the Philox stream (seed, t), so results do not depend on
the number of worker threads.
"""
from __future__ import annotations

import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import _walk, matprod, prob
from .errors import CapError, RecurrentEnvironment

# numba falls back to another threading layer on its own; the notice is noise
warnings.filterwarnings("ignore", message="The TBB threading layer")

DEFAULT_EPS_CONF = 1e-6
DEFAULT_STEP_CAP = 10**10
DEFAULT_W_CAP = 4096
DESK_CAP = 10**5
X_GUARD = 256


# -------------------------------------------------------------- single step

@dataclass(frozen=True)
class WalkState:
    kind: str
    position: int
    steps: int = 0

    def __post_init__(self):
        if self.position < 0:
            raise ValueError("position must be >= 0")


def step(env, state, stream):
    """One move of ``state`` using the next uniform of ``stream`` (forced moves draw nothing)."""
    code = _walk.kind_code(state.kind)
    x = state.position
    up = 1 if code == _walk.KIND_X else -1        # direction of the size-1 q move
    if x < 2:
        nxt = {0: 1, 1: 2}[x] if code == _walk.KIND_X else {1: 0, 0: 2}[x]
    else:
        q, p1, _ = env.law(x, x + 1)
        u = stream.uniform()
        if u < q[0]:
            nxt = x + up
        elif u < q[0] + p1[0]:
            nxt = x - up
        else:
            nxt = x - 2 * up
    return WalkState(state.kind, nxt, state.steps + 1)


# ---------------------------------------------------------------- kernels

@nb.njit(parallel=True, cache=True)
def _census_kernel(kind, K, stop, resample, ret, land_low, seed, cq, cqp, step_cap,
                   counts, final, steps, status):
    trials = counts.shape[0]
    k0 = np.uint64(seed)
    for t in nb.prange(trials):
        st = _walk.new_state()
        k1 = np.uint64(t)
        x = 2
        n = 0
        flag = 0
        counts[t, x] += 1
        while True:
            if resample:
                if x > K:
                    if _walk.uniform(st, k0, k1) >= ret[x - K - 1]:
                        break
                    if kind == 0 and _walk.uniform(st, k0, k1) < land_low:
                        x = K - 1
                    else:
                        x = K
                    counts[t, x] += 1
                    continue
            elif x >= stop:
                break
            if n >= step_cap:
                flag = 1
                break
            x = _walk.step(kind, x, st, k0, k1, cq, cqp)
            n += 1
            if x <= K:
                counts[t, x] += 1
        final[t] = x
        steps[t] = n
        status[t] = flag


@nb.njit(parallel=True, cache=True)
def _layer_kernel(k, seed, trials, cq, cqp, step_cap, landing, status):
    k0 = np.uint64(seed)
    for t in nb.prange(trials):
        st = _walk.new_state()
        k1 = np.uint64(t)
        x = 2
        n = 0
        while x < 2 * k and n < step_cap:
            x = _walk.step(1, x, st, k0, k1, cq, cqp)
            n += 1
        landing[t] = x
        status[t] = 0 if x >= 2 * k else 1


@contextmanager
def _threads(workers):
    if workers is None:
        yield
        return
    old = nb.get_num_threads()
    nb.set_num_threads(max(1, min(int(workers), nb.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        nb.set_num_threads(old)


# -------------------------------------------------------- return probabilities

def return_curve(env, kind, K, w_cap=DEFAULT_W_CAP, tol=prob.DEFAULT_TOL):
    """ret[w-1] = P(walk at K+w ever hits [0, K]) for w = 1..w_cap, and F(K)."""
    kind = kind.upper()
    if kind == "X":
        F = prob.series_F_X(env, K, tol=tol)
        if F.diverged:
            raise RecurrentEnvironment("recurrent: cutpoint census undefined")
        logt = prob._fx_logterms(env, K, K + w_cap + 1)[:w_cap]
        partial = np.cumsum(np.exp(logt))          # F_X(K, K+w)
    else:
        F = prob.series_F_Y(env, K, tol=tol)
        if F.diverged:
            raise RecurrentEnvironment("recurrent: cutpoint census undefined")
        z = matprod.zeta_tails(env, K + 1, K + w_cap - 1, tol=tol)
        partial = np.concatenate(([1.0], 1.0 + np.cumsum(np.cumprod(z))))
    ret = np.clip(1.0 - partial / F.estimate, 0.0, 1.0)
    return ret, F


def x_landing_split(env, K, guard=X_GUARD, tol=prob.DEFAULT_TOL):
    """(r, mu) for X at K+1: r = P(ever hit [0, K]), mu = P(first such hit is at K-1).

    With r_x = 1 - 1/F_X(x-1) and nu = r - mu, the landing masses obey
    mu_x = p2_x / (1 - q_x nu_{x+1}), swept backwards from a far guard where
    the fixed point of the map is used as seed; the map is a contraction.
    """
    top = K + guard
    prof = prob.profile(env, "F_X", K, top + 1, tol=tol)
    if prof.diverged:
        raise RecurrentEnvironment("recurrent: cutpoint census undefined")
    r = 1.0 - 1.0 / prof.estimate                  # r[i] = r_{K+1+i}
    q, _, p2 = env.law(K + 1, top + 3)
    i = len(r) - 1
    c = 1.0 - q[i] * r[i]
    mu = (-c + math.sqrt(c * c + 4.0 * q[i] * p2[i])) / (2.0 * q[i])
    for i in range(len(r) - 2, -1, -1):
        mu = p2[i] / (1.0 - q[i] * (r[i + 1] - mu))
    return float(r[0]), float(mu)


def y_return_pair(env, K, tol=prob.DEFAULT_TOL):
    """Return probabilities of Y from K+1 and K+2."""
    F = prob.series_F_Y(env, K, tol=tol)
    if F.diverged:
        raise RecurrentEnvironment("recurrent: cutpoint census undefined")
    z = matprod.zeta_tail(env, K + 1, tol=tol)
    F = F.estimate
    return np.array([max(0.0, 1.0 - 1.0 / F), max(0.0, 1.0 - (1.0 + z) / F)])


# ------------------------------------------------------------------ census

@dataclass(frozen=True, eq=False)
class CutpointCensus:
    kind: str
    K: int
    W: int | None                   # None in resample mode
    mode: str
    eps_conf: float
    eps_cens: float
    seed: int
    counts: np.ndarray              # (trials, K+1) visit counts of sites 0..K
    final: np.ndarray               # stopping position per trajectory
    steps: np.ndarray               # simulated steps (excursions above K excluded when resampling)
    meta: dict = field(default_factory=dict)

    @property
    def trials(self):
        return self.counts.shape[0]

    @property
    def cut(self):
        """Boolean (trials, K+1): site is a cutpoint (sites 0, 1 always False)."""
        c = self.counts == (1 if self.kind == "X" else 0)
        c[:, :2] = False
        return c

    def cutpoints(self, t):
        return np.nonzero(self.cut[t])[0].tolist()

    @property
    def layer_cut(self):
        """Y only: (trials, L) flags for layers L_k = {2k, 2k+1}, k = 1..L, 2k+1 <= K."""
        if self.kind != "Y":
            raise ValueError("layer cutpoints are defined for Y only")
        L = (self.K - 1) // 2
        c = self.counts[:, 2:2 * L + 2] == 0
        return c[:, 0::2] | c[:, 1::2]

    def s_n(self, n_grid):
        """(trials, len(n_grid)) cutpoint counts on [2, n]."""
        n_grid = np.asarray(n_grid, dtype=np.int64)
        if np.any(n_grid < 2) or np.any(n_grid > self.K):
            raise ValueError("grid values must lie in [2, K]")
        cum = np.cumsum(self.cut, axis=1)
        return cum[:, n_grid]

    def site_frequency(self):
        return self.cut.mean(axis=0)


def _check_transient(env, kind):
    verdict = prob.transient(env, kind)
    if verdict.verdict == "recurrent":
        raise RecurrentEnvironment("recurrent: cutpoint census undefined")
    return verdict


def cutpoint_census(env, kind, K, eps_conf=DEFAULT_EPS_CONF, step_cap=DEFAULT_STEP_CAP,
                    seed=None, trials=1, workers=None, mode="auto", w_cap=DEFAULT_W_CAP):
    """Simulate ``trials`` walks from 2 and classify the sites <= K.

    ``step_cap`` applies per trajectory; exceeding it raises :class:`CapError`
    carrying the census of the finished trajectories as ``partial``.
    """
    if seed is None:
        raise ValueError("seed is required")
    kind = kind.upper()
    code = _walk.kind_code(kind)
    K = int(K)
    if K < 4:
        raise ValueError("K must be >= 4")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("auto", "margin", "resample"):
        raise ValueError("mode must be auto, margin or resample")
    verdict = _check_transient(env, kind)

    W = None
    eps_cens = 0.0
    ret = np.zeros(2)
    land_low = 0.0
    meta = {"transience": verdict.verdict}
    if mode in ("auto", "margin"):
        curve, F = return_curve(env, kind, K, w_cap)
        hit = np.nonzero(curve < eps_conf)[0]
        if hit.size:
            W = int(hit[0]) + 1
            eps_cens = float(curve[W - 1])
            meta["F_K"] = F.estimate
        elif mode == "margin":
            raise CapError(f"no margin W <= {w_cap} certifies eps_conf={eps_conf}")
    if W is None:
        mode = "resample"
        if kind == "X":
            r, mu = x_landing_split(env, K)
            ret[0] = r
            land_low = mu / r if r > 0 else 0.0
            meta.update(return_prob=r, land_low=land_low)
        else:
            ret = y_return_pair(env, K)
            meta.update(return_prob=ret.tolist())
    else:
        mode = "margin"
    stop = K + (W or 0)
    max_site = stop + 2 if mode == "margin" else K + 3
    cq, cqp = _walk.thresholds(env, max_site)

    counts = np.zeros((int(trials), K + 1), dtype=np.int32)
    final = np.zeros(int(trials), dtype=np.int64)
    steps = np.zeros(int(trials), dtype=np.int64)
    status = np.zeros(int(trials), dtype=np.int8)
    with _threads(workers):
        _census_kernel(code, K, stop, mode == "resample", ret, land_low, int(seed),
                       cq, cqp, int(min(step_cap, 2**62)), counts, final, steps, status)
    meta["total_steps"] = int(steps.sum())
    census = CutpointCensus(kind, K, W, mode, float(eps_conf), eps_cens, int(seed),
                            counts, final, steps, meta)
    if np.any(status):
        done = status == 0
        partial = CutpointCensus(kind, K, W, mode, float(eps_conf), eps_cens, int(seed),
                                 counts[done], final[done], steps[done],
                                 dict(meta, finished=int(done.sum())))
        raise CapError(f"step cap {step_cap} exceeded by {int((~done).sum())} trajectories",
                       partial=partial)
    return census


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class SnTable:
    n: np.ndarray
    mean: np.ndarray
    ci: np.ndarray              # 3-sigma half-width of the mean
    trials: int
    samples: np.ndarray         # (trials, len(n)) per-trajectory S_n

    def rows(self):
        return [(int(n), float(m), float(c), self.trials)
                for n, m, c in zip(self.n, self.mean, self.ci)]


def s_n_statistics(env, kind, n_grid, trials, eps_conf=DEFAULT_EPS_CONF, seed=None,
                   workers=None, step_cap=DEFAULT_STEP_CAP, desk_cap=DESK_CAP, census=None):
    """Mean S_n with 3-sigma intervals from one census at K = max(n_grid)."""
    n_grid = np.asarray(sorted(set(int(n) for n in n_grid)), dtype=np.int64)
    if n_grid.size == 0 or n_grid[0] < 2:
        raise ValueError("grid values must be >= 2")
    if n_grid[-1] > desk_cap:
        raise ValueError(f"max(n_grid) exceeds the desk cap {desk_cap}")
    if census is None:
        census = cutpoint_census(env, kind, max(4, int(n_grid[-1])), eps_conf=eps_conf,
                                 step_cap=step_cap, seed=seed, trials=trials, workers=workers)
    s = census.s_n(n_grid).astype(float)
    sd = s.std(axis=0, ddof=1) if s.shape[0] > 1 else np.zeros(len(n_grid))
    return SnTable(n_grid, s.mean(axis=0), 3.0 * sd / math.sqrt(s.shape[0]),
                   s.shape[0], s)


def layer_hit_estimate(env, k, trials, seed, step_cap=DEFAULT_STEP_CAP, workers=None):
    """Frequencies with which Y from 2 first enters [2k, inf) at 2k resp. 2k+1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if seed is None:
        raise ValueError("seed is required")
    if k == 1:
        return 1.0, 0.0
    cq, cqp = _walk.thresholds(env, 2 * k + 2)
    landing = np.zeros(int(trials), dtype=np.int64)
    status = np.zeros(int(trials), dtype=np.int8)
    with _threads(workers):
        _layer_kernel(int(k), int(seed), int(trials), cq, cqp, int(min(step_cap, 2**62)),
                      landing, status)
    if np.any(status):
        raise CapError("step cap exceeded before entering the layer")
    if np.any(landing > 2 * k + 1):
        raise AssertionError("entry into [2k, inf) overshot the layer")
    h2 = float(np.count_nonzero(landing == 2 * k + 1)) / trials
    return 1.0 - h2, h2


__all__ = ["WalkState", "step", "CutpointCensus", "cutpoint_census", "s_n_statistics",
           "layer_hit_estimate", "return_curve", "x_landing_split", "y_return_pair",
           "SnTable"]
