"""Walk environments: per-site laws (q_k, p_k1, p_k2) for k >= 2 and their limits.

Sites 0 and 1 have forced moves and carry no parameters.  Every environment
exposes vectorised access through :meth:`Environment.law` and
:meth:`Environment.coeffs`; scalar access goes through :func:`site_params`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

SUM_TOL = 1e-12
DEFAULT_B_BASE = 0.25


class EnvError(ValueError):
    """Invalid site law or environment description."""


class InfeasibleEnvironment(EnvError):
    """Raised when a spectral-radius target cannot be inverted into a site law."""

    def __init__(self, message, smallest_n0=None):
        super().__init__(message)
        self.smallest_n0 = smallest_n0


class SiteParams(NamedTuple):
    q: float
    p1: float
    p2: float
    a: float
    b: float
    rho: float
    sigma: float


@dataclass(frozen=True)
class LimitConstants:
    a: float
    b: float
    rho: float
    sigma: float
    a_hat: float | None
    tau: float


def roots(a, b):
    """Eigenvalues (rho, sigma) of [[a, b], [1, 0]]; works on scalars and arrays.

    sigma is evaluated as -b/rho, which avoids the cancellation in
    (a - sqrt(a^2 + 4b))/2 when b is small.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rho = 0.5 * (a + np.sqrt(a * a + 4.0 * b))
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(rho > 0, -b / np.where(rho > 0, rho, 1.0), 0.0)
    if rho.ndim == 0:
        return float(rho), float(sigma) + 0.0
    return rho, sigma


def limit_constants(a, b):
    """Limit eigenvalues and the corner constant tau for limits (a, b)."""
    rho, sigma = roots(a, b)
    if rho >= 1.0:
        a_hat = None
        tau = -sigma + 0.0
    else:
        a_hat = a + (1.0 - rho) * (rho - sigma) / rho
        # (sqrt(a_hat^2 + 4b) - a_hat)/2 without cancellation
        tau = 2.0 * b / (a_hat + math.sqrt(a_hat * a_hat + 4.0 * b))
    return LimitConstants(a=float(a), b=float(b), rho=rho, sigma=sigma, a_hat=a_hat, tau=tau)


def _check_law(q, p1, p2, where=""):
    q = np.asarray(q, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise EnvError(f"non-finite transition probability{where}")
    if np.any(q <= 0) or np.any(q > 1):
        raise EnvError(f"q must be in (0, 1]{where}")
    if np.any(p2 <= 0):
        raise EnvError(f"p2 must be > 0{where}")
    if np.any(p1 < 0):
        raise EnvError(f"p1 must be >= 0{where}")
    if np.any(np.abs(q + p1 + p2 - 1.0) > SUM_TOL):
        raise EnvError(f"q + p1 + p2 must equal 1{where}")


def _law_from_coeffs(a, b):
    q = 1.0 / (1.0 + a)
    return q, (a - b) * q, b * q


@dataclass(frozen=True)
class Environment:
    """Base class.  Subclasses implement ``_coeffs(k)`` on an integer array.

    ``max_site`` is None for generator environments; table environments raise
    past it.  Instances are immutable and hold no caches.
    """

    a_limit: float
    b_limit: float
    meta: dict = field(default_factory=dict, compare=False)

    max_site: int | None = None

    def _coeffs(self, k):  # pragma: no cover - abstract
        raise NotImplementedError

    def _sites(self, lo, hi):
        if lo < 2:
            raise EnvError(f"site index must be >= 2, got {lo}")
        if self.max_site is not None and hi - 1 > self.max_site:
            raise EnvError(
                f"site {hi - 1} is past the last tabulated site {self.max_site}")
        return np.arange(lo, hi, dtype=np.int64)

    def coeffs(self, lo, hi):
        """Arrays (a_k, b_k) for k in [lo, hi)."""
        return self._coeffs(self._sites(lo, hi))

    def law(self, lo, hi):
        """Arrays (q_k, p_k1, p_k2) for k in [lo, hi)."""
        a, b = self.coeffs(lo, hi)
        return _law_from_coeffs(a, b)

    def rho(self, lo, hi):
        a, b = self.coeffs(lo, hi)
        return roots(a, b)[0]

    def limits(self):
        return limit_constants(self.a_limit, self.b_limit)

    def describe(self):
        return dict(self.meta)


@dataclass(frozen=True)
class ConstantEnvironment(Environment):
    q: float = 0.5
    p1: float = 0.25
    p2: float = 0.25

    def _coeffs(self, k):
        n = len(k)
        return (np.full(n, (self.p1 + self.p2) / self.q), np.full(n, self.p2 / self.q))

    def law(self, lo, hi):
        n = len(self._sites(lo, hi))
        return np.full(n, self.q), np.full(n, self.p1), np.full(n, self.p2)


@dataclass(frozen=True, eq=False)
class TableEnvironment(Environment):
    """Site laws tabulated for k = 2 .. max_site.  Arrays are indexed by k - 2."""

    q: np.ndarray = None
    p1: np.ndarray = None
    p2: np.ndarray = None

    def _coeffs(self, k):
        i = k - 2
        q, p1, p2 = self.q[i], self.p1[i], self.p2[i]
        return (p1 + p2) / q, p2 / q

    def law(self, lo, hi):
        i = self._sites(lo, hi) - 2
        return self.q[i].copy(), self.p1[i].copy(), self.p2[i].copy()


@dataclass(frozen=True, eq=False)
class RhoEnvironment(Environment):
    """Environment given by spectral radii with a fixed b_k = b_base.

    ``rho_fn`` maps an integer array of sites to the target radii.
    """

    rho_fn: object = None
    b_base: float = DEFAULT_B_BASE

    def _coeffs(self, k):
        rho = np.asarray(self.rho_fn(k), dtype=float)
        return rho - self.b_base / rho, np.full(len(k), self.b_base)


def build_constant(q, p1, p2):
    """Site-independent law; limits equal the per-site values."""
    _check_law(q, p1, p2)
    q, p1, p2 = float(q), float(p1), float(p2)
    return ConstantEnvironment(
        a_limit=(p1 + p2) / q, b_limit=p2 / q,
        meta={"type": "constant", "q": q, "p1": p1, "p2": p2},
        q=q, p1=p1, p2=p2)


def build_table(q, p1, p2, a_limit=None, b_limit=None, meta=None):
    """Table environment for sites 2 .. 2+len(q)-1.

    Without declared limits the last tabulated coefficients are used.
    """
    q = np.array(q, dtype=float)
    p1 = np.array(p1, dtype=float)
    p2 = np.array(p2, dtype=float)
    if not (q.shape == p1.shape == p2.shape) or q.ndim != 1 or len(q) == 0:
        raise EnvError("q, p1, p2 must be equal-length non-empty sequences")
    _check_law(q, p1, p2, " in table")
    for arr in (q, p1, p2):
        arr.setflags(write=False)
    if a_limit is None:
        a_limit = (p1[-1] + p2[-1]) / q[-1]
    if b_limit is None:
        b_limit = p2[-1] / q[-1]
    return TableEnvironment(
        a_limit=float(a_limit), b_limit=float(b_limit),
        meta=dict(meta or {"type": "table", "sites": len(q)}),
        max_site=len(q) + 1, q=q, p1=p1, p2=p2)


def rho_min_feasible(b_base):
    """Smallest spectral radius whose inversion with b_k = b_base keeps p_k1 >= 0."""
    return 0.5 * (b_base + math.sqrt(b_base * b_base + 4.0 * b_base))


def env_from_rho(rho, b_base=DEFAULT_B_BASE, a_limit=None, b_limit=None):
    """Invert a table of spectral radii (for k = 2, 3, ...) with b_k = b_base."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise InfeasibleEnvironment("spectral radii must be positive")
    a = rho - b_base / rho
    if np.any(a < b_base):
        bad = int(np.argmax(a < b_base)) + 2
        raise InfeasibleEnvironment(
            f"rho_{bad} = {rho[bad - 2]:.6g} is below the feasible minimum "
            f"{rho_min_feasible(b_base):.6g} for b_base = {b_base}")
    q, p1, p2 = _law_from_coeffs(a, np.full_like(a, b_base))
    if a_limit is None:
        a_limit, b_limit = float(a[-1]), float(b_base)
    return build_table(q, p1, p2, a_limit, b_limit,
                       meta={"type": "rho-inverted", "b_base": b_base, "sites": len(rho)})


def corollary_r(n, beta):
    """Perturbation r_n; r_2 = r_3 = r_4."""
    n = np.maximum(np.asarray(n, dtype=float), 4.0)
    return (1.0 / n + 1.0 / (n * np.log(np.log(n)) ** beta)) / 3.0


def _corollary_rho(n, beta, sign):
    step = 3.0 * corollary_r(n, beta)
    return 1.0 - step if sign == "X" else 1.0 + step


def smallest_feasible_n0(beta, sign, b_base=DEFAULT_B_BASE, start=4, half_rule=False):
    """Smallest n0 >= start from which every target radius inverts feasibly.

    With ``half_rule`` the default clamp point is used: additionally 3 r_n < 1/2.
    Targets are monotone in n, so checking n0 itself suffices.
    """
    lo = rho_min_feasible(b_base)
    n = max(int(start), 4)
    while True:
        step = 3.0 * float(corollary_r(n, beta))
        rho = _corollary_rho(n, beta, sign)
        ok = rho > 0 and rho >= lo
        if half_rule:
            ok = ok and step < 0.5
        if ok:
            return n
        n += 1


def build_corollary(beta, sign, b_base=DEFAULT_B_BASE, n0=None):
    """Near-critical environment with rho_k = 1 -/+ 3 r_k for k >= n0.

    ``sign`` is "X" (radii increase to 1 from below) or "Y" (decrease to 1
    from above).  For k < n0 the radius is frozen at rho_{n0}.  The O(r^2)
    correction is taken to be zero and b_k = b_base at every site.
    """
    beta = float(beta)
    if beta < 0:
        raise EnvError("beta must be >= 0")
    sign = str(sign).upper()
    if sign not in ("X", "Y"):
        raise EnvError("sign must be 'X' or 'Y'")
    if not 0 < b_base < 1:
        raise EnvError("b_base must lie in (0, 1)")
    if n0 is None:
        n0 = smallest_feasible_n0(beta, sign, b_base, half_rule=True)
    n0 = int(n0)
    if n0 < 4:
        raise EnvError("n0 must be >= 4")
    rho0 = _corollary_rho(n0, beta, sign)
    if rho0 <= 0 or rho0 < rho_min_feasible(b_base):
        best = smallest_feasible_n0(beta, sign, b_base, start=n0)
        raise InfeasibleEnvironment(
            f"target rho_{n0} = {rho0:.6g} cannot be inverted with b_base = {b_base} "
            f"(needs rho >= {rho_min_feasible(b_base):.6g}); smallest feasible n0 is {best}",
            smallest_n0=best)

    def rho_fn(k, beta=beta, sign=sign, n0=n0):
        return _corollary_rho(np.maximum(k, n0), beta, sign)

    return RhoEnvironment(
        a_limit=1.0 - b_base, b_limit=b_base,
        meta={"type": "corollary", "beta": beta, "sign": sign, "b_base": b_base,
              "n0": n0, "b_base_is_default": b_base == DEFAULT_B_BASE},
        rho_fn=rho_fn, b_base=b_base)


def site_params(env, k):
    """(q, p1, p2, a_k, b_k, rho_k, sigma_k) at a single site k >= 2."""
    if k < 2:
        raise EnvError("sites 0 and 1 have forced moves; k must be >= 2")
    q, p1, p2 = (float(x[0]) for x in env.law(k, k + 1))
    a, b = (float(x[0]) for x in env.coeffs(k, k + 1))
    rho, sigma = roots(a, b)
    return SiteParams(q, p1, p2, a, b, rho, sigma)


def limits(env):
    return env.limits()


# ---------------------------------------------------------------- config I/O

def read_table_csv(path):
    """Read a ``k,q,p1,p2`` table; rows must cover k = 2, 3, ... without gaps."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["k", "q", "p1", "p2"]:
            raise EnvError(f"{path}: header must be k,q,p1,p2")
        for row in reader:
            rows.append((int(row["k"]), float(row["q"]), float(row["p1"]), float(row["p2"])))
    rows.sort()
    ks = [r[0] for r in rows]
    if ks != list(range(2, 2 + len(ks))):
        raise EnvError(f"{path}: sites must run 2, 3, ... without gaps")
    return build_table([r[1] for r in rows], [r[2] for r in rows], [r[3] for r in rows],
                       meta={"type": "table", "path": str(path), "sites": len(rows)})


def write_table_csv(env, path, max_site):
    q, p1, p2 = env.law(2, max_site + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "q", "p1", "p2"])
        for i in range(len(q)):
            w.writerow([i + 2, repr(float(q[i])), repr(float(p1[i])), repr(float(p2[i]))])


_ENV_KEYS = {
    "constant": {"type", "q", "p1", "p2"},
    "corollary": {"type", "beta", "sign", "b_base", "n0"},
    "table": {"type", "path", "a", "b"},
}


def from_config(cfg, base_dir=None):
    """Build an environment from its JSON description (already parsed)."""
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise EnvError("environment config must be an object with a 'type' key")
    kind = cfg["type"]
    if kind not in _ENV_KEYS:
        raise EnvError(f"unknown environment type {kind!r}")
    unknown = set(cfg) - _ENV_KEYS[kind]
    if unknown:
        raise EnvError(f"unknown keys for {kind} environment: {sorted(unknown)}")
    if kind == "constant":
        return build_constant(cfg["q"], cfg["p1"], cfg["p2"])
    if kind == "corollary":
        return build_corollary(cfg["beta"], cfg["sign"], cfg.get("b_base", DEFAULT_B_BASE),
                               cfg.get("n0"))
    path = Path(cfg["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    env = read_table_csv(path)
    if "a" in cfg or "b" in cfg:
        env = build_table(env.q, env.p1, env.p2, cfg.get("a"), cfg.get("b"), meta=env.meta)
    return env


def load(path):
    """Read an environment JSON file."""
    path = Path(path)
    with open(path) as fh:
        cfg = json.load(fh)
    return from_config(cfg, base_dir=path.parent)


def to_config(env):
    """Resolved JSON-able description of an environment (echoed in manifests)."""
    return env.describe()
