"""Verification suites for the limit and ratio laws, plus the E S_n growth study."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import contfrac, env as envmod, matprod, prob, sim

NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class ConvergenceReport:
    quantity: str
    n: np.ndarray
    value: np.ndarray
    target: float
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def error(self):
        return np.abs(self.value - self.target)

    @property
    def final_error(self):
        return float(self.error[-1])

    @property
    def eventually_decreasing(self):
        """Errors on the second half of the grid never grow beyond float noise."""
        e = np.maximum(self.error, NOISE_FLOOR)
        tail = e[len(e) // 2:]
        return bool(np.all(np.diff(tail) <= 1e-9 * tail[:-1] + NOISE_FLOOR))

    @property
    def passed(self):
        return bool(self.final_error < self.tol and self.eventually_decreasing)

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def rows(self):
        return [(int(n), float(v), self.target, float(e))
                for n, v, e in zip(self.n, self.value, self.error)]

    def summary(self):
        return {"quantity": self.quantity, "verdict": self.verdict,
                "final_error": self.final_error, "target": self.target, "tol": self.tol,
                **{k: v for k, v in self.meta.items() if np.isscalar(v) or v is None}}


# ----------------------------------------------------------- corner, B path

def corner_cf(env, k, n):
    """Corner probability Q^{k+n+1}_{k+n-1}(k, k+n) through its continued fraction.

    beta_{k+m} = b_{k+m}, alpha_{k+m} = a_{k+m} + 1/S_m with
    S_m = sum_{s=k+1}^{k+m} e1 A_s..A_{k+m-1} e1'.  The row sums U_m obey
    U_{m+1} = U_m A_{k+m} + e1 and are rescaled as they grow.
    """
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and n >= 2")
    a, b = env.coeffs(k + 1, k + n)               # sites k+1 .. k+n-1
    inv_s = np.empty(n - 1)
    u0, u1, logscale = 1.0, 0.0, 0.0              # U_1 = e1
    for i in range(n - 1):
        inv_s[i] = math.exp(-logscale) / u0
        u0, u1 = u0 * a[i] + u1 + math.exp(-logscale), u0 * b[i]
        big = max(u0, u1)
        if big > 1e100:
            u0, u1 = u0 / big, u1 / big
            logscale += math.log(big)
    alpha = a + inv_s
    # the fraction nests from site k+n-1 outwards down to k+1
    return float(contfrac.backward_values(alpha[::-1].copy(), b[::-1].copy(), 0.0)[0])


def corner_split(env, k, n):
    return prob.escape_Y_split(env, k, k + n - 1, k + n).q_high


# ------------------------------------------------------------------ suites

PROP1_TOL = {"eta": 1e-6, "h": 1e-4, "q_ratio": 1e-3, "corner": 1e-4}


def verify_prop1_limits(env, n_grid=(50, 100, 200, 400, 1000), k_samples=(1, 10, 100),
                        tol=None, q_ratio_n=None, corner_n=None):
    """Reports for eta -> -sigma, h -> -sigma/(1-sigma), the Q ratio -> -1/sigma
    (max error over ``k_samples``) and the corner probability -> tau.

    The Q-ratio and corner grids stop at ``q_ratio_n`` / ``corner_n`` when
    given (the closed-form split costs O(n^2)).
    """
    tol = dict(PROP1_TOL, **(tol or {}))
    lim = env.limits()
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    sig = lim.sigma
    reports = {}
    eta = prob.eta_seq(env, int(grid[-1]))
    reports["eta"] = ConvergenceReport("eta", grid, eta[grid - 1], -sig, tol["eta"])
    h = prob.h_layer_seq(env, int(grid[-1]))
    reports["h"] = ConvergenceReport("h", grid, h[grid - 1], -sig / (1 - sig), tol["h"])

    qg = grid if q_ratio_n is None else grid[grid <= q_ratio_n]
    vals, per_k = [], {}
    for n in qg:
        errs = []
        worst = None
        for k in k_samples:
            s = prob.escape_Y_split(env, k, k + 1, k + int(n))
            r = s.q_low / s.q_high
            per_k.setdefault(int(k), []).append(r)
            if worst is None or abs(r + 1 / sig) > abs(worst + 1 / sig):
                worst = r
            errs.append(abs(r + 1 / sig))
        vals.append(worst)
    reports["q_ratio"] = ConvergenceReport("q_ratio", qg, np.array(vals), -1.0 / sig,
                                           tol["q_ratio"], {"per_k": per_k})

    cg = grid if corner_n is None else grid[grid <= corner_n]
    k0 = int(k_samples[0])
    lem = np.array([corner_split(env, k0, int(n)) for n in cg])
    cf = np.array([corner_cf(env, k0, int(n)) for n in cg])
    cross = float(np.max(np.abs(lem - cf)))
    reports["corner"] = ConvergenceReport(
        "corner", cg, lem, lim.tau, tol["corner"],
        {"cross_path_max_diff": cross, "cf_path": cf.tolist(), "rho": lim.rho})
    return reports


def verify_ratio_limits(env, n_grid=(50, 100, 200, 500), m_samples=(5, 10, 50), tol=1e-6):
    """Product ratio, summed ratio and F_X/G against their common target rho/(rho-sigma).

    The value at each n is the sample with the largest error over ``m_samples``.
    """
    target = matprod.limit_ratio(env)
    grid = np.asarray(sorted(n_grid), dtype=np.int64)

    def worst(fn):
        out, spread = [], []
        for n in grid:
            v = np.array([fn(int(m), int(n)) for m in m_samples])
            out.append(v[np.argmax(np.abs(v - target))])
            spread.append(float(np.max(np.abs(v - target))))
        return np.array(out), spread

    reports = {}
    v, s = worst(lambda m, n: matprod.product_over_zeta(env, m, n))
    reports["product_ratio"] = ConvergenceReport("product_ratio", grid, v, target, tol,
                                                   {"spread": s})
    v, s = worst(lambda m, n: matprod.sum_product_over_zeta(env, m, n))
    reports["sum_ratio"] = ConvergenceReport("sum_ratio", grid, v, target, tol, {"spread": s})

    def fx_over_g(m, n):
        f = prob._fx_logterms(env, m, m + n)
        g_r = 1.0 / matprod.theta_tails(env, m + 1, m + n - 1)
        g = np.concatenate(([0.0], np.cumsum(np.log(g_r))))
        top = max(f.max(), g.max())
        return float(np.exp(f - top).sum() / np.exp(g - top).sum())

    v, s = worst(fx_over_g)
    reports["FX_over_G"] = ConvergenceReport("FX_over_G", grid, v, target, tol,
                                                    {"spread": s})
    return reports


@dataclass(frozen=True)
class BoundedRatios:
    families: dict              # name -> dict(min, max, ratio, applicable)
    limit: float = 1e3

    @property
    def passed(self):
        ok = [f for f in self.families.values() if f["applicable"]]
        return bool(ok) and all(f["min"] > 0 and math.isfinite(f["max"])
                                and f["max"] / f["min"] < self.limit for f in ok)

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


def verify_bounded_ratios(env, m_grid=(10, 30, 100, 300, 1000, 3000, 10000), k_base=(2, 10)):
    """Empirical ranges of entry-product / rho-product, F_X/D_X and F_Y/D_Y."""
    m_grid = np.asarray(sorted(m_grid), dtype=np.int64)
    fam = {}
    vals = []
    for k in k_base:
        for m in m_grid[m_grid >= k]:
            z = matprod.zeta_row(env, int(k), int(m))
            rho = env.rho(int(k), int(m) + 1)
            vals.append(math.exp(float(-np.log(z).sum() - np.log(rho).sum())))
    vals = np.array(vals)
    fam["entry_over_rho"] = {"applicable": True, "min": float(vals.min()),
                             "max": float(vals.max()), "values": vals.tolist()}
    lo, hi = int(m_grid[0]), int(m_grid[-1])
    for kind in ("X", "Y"):
        name = f"F_{kind}_over_D_{kind}"
        pf = prob.profile(env, "F_" + kind, lo, hi)
        pd = prob.profile(env, "D_" + kind, lo, hi)
        if pf.diverged or pd.diverged:
            fam[name] = {"applicable": False, "min": math.nan, "max": math.nan, "values": []}
            continue
        r = (pf.estimate / pd.estimate)[m_grid - lo]
        fam[name] = {"applicable": True, "min": float(r.min()), "max": float(r.max()),
                     "values": r.tolist()}
    for f in fam.values():
        f["ratio"] = f["max"] / f["min"] if f["applicable"] else math.nan
    return BoundedRatios(fam)


# ---------------------------------------------------------------- growth

def normalizer(n, beta, eps=0.0):
    n = np.asarray(n, dtype=float)
    return np.log(n) ** (1.0 + eps) * np.log(np.log(n)) ** (-beta)


def _ratio_ci(samples, i, j):
    """E S_{n_j} / E S_{n_i} with a 3-sigma delta-method half-width."""
    x, y = samples[:, i].astype(float), samples[:, j].astype(float)
    mx, my = x.mean(), y.mean()
    r = my / mx
    c = np.cov(np.vstack([x, y]), ddof=1)
    var = (c[1, 1] - 2 * r * c[0, 1] + r * r * c[0, 0]) / (mx * mx * len(x))
    return float(r), 3.0 * math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class GrowthResult:
    kind: str
    beta: float
    n: np.ndarray
    exact: np.ndarray | None            # E S_n from the series
    mc: sim.SnTable | None
    flatness: float                     # max/min of the normalized exact (else MC) curve, top half
    exponent: float                     # slope of log E S_n against log log n
    ratio: tuple | None                 # (E S_last / E S_first, 3-sigma) from MC
    diagnostic: np.ndarray | None       # per-trajectory S_n / ((log n)^{1+eps} (log log n)^-beta)

    @property
    def passed(self):
        return self.flatness < 3.0


def growth_curve(kind, beta_list, n_grid, trials=0, seed=None, eps=0.1, workers=None,
                 b_base=envmod.DEFAULT_B_BASE, exact=True):
    """E S_n / (log n (log log n)^-beta) for corollary environments of the given kind."""
    kind = kind.upper()
    n_grid = np.asarray(sorted(n_grid), dtype=np.int64)
    if trials and seed is None:
        raise ValueError("seed is required for Monte Carlo")
    out = []
    for beta in beta_list:
        if not 0 <= beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        e = envmod.build_corollary(beta, kind, b_base=b_base)
        ex = None
        if exact:
            ex = (prob.expected_cutpoints_X if kind == "X" else prob.expected_cutpoints_Y)(e, n_grid)
        tab = diag = ratio = None
        if trials:
            tab = sim.s_n_statistics(e, kind, n_grid, trials, seed=seed, workers=workers)
            diag = tab.samples / normalizer(n_grid, beta, eps)
            ratio = _ratio_ci(tab.samples, 0, len(n_grid) - 1)
        curve = ex if ex is not None else tab.mean
        norm = curve / normalizer(n_grid, beta)
        top = norm[len(norm) // 2:]
        flat = float(top.max() / top.min())
        slope = float(np.polyfit(np.log(np.log(n_grid)), np.log(curve), 1)[0])
        out.append(GrowthResult(kind, float(beta), n_grid, ex, tab, flat, slope, ratio, diag))
    return out
