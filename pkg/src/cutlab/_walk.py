"""Numba step kernels shared by the simulator and the Monte Carlo oracle.

A trajectory's RNG state is a uint64 array ``st`` of length 6:
``[block, used, w0, w1, w2, w3]`` holding the current Philox block.  Each
64-bit word yields two 32-bit uniforms (high half first), eight per block.
Sites carry thresholds ``cq[x] = q_x`` and ``cqp[x] = q_x + p_x1``.
"""
import numba as nb
import numpy as np

from .env import EnvError
from .rng import half_unit, philox4x64

KIND_X = 0
KIND_Y = 1
_ZERO = np.uint64(0)
_ONE = np.uint64(1)
_EIGHT = np.uint64(8)


def kind_code(kind):
    k = str(kind).upper()
    if k not in ("X", "Y"):
        raise EnvError(f"kind must be 'X' or 'Y', got {kind!r}")
    return KIND_X if k == "X" else KIND_Y


@nb.njit(cache=True, inline="always")
def new_state():
    st = np.zeros(6, dtype=np.uint64)
    st[1] = _EIGHT
    return st


@nb.njit(cache=True, inline="always")
def uniform(st, k0, k1):
    if st[1] >= _EIGHT:
        w0, w1, w2, w3 = philox4x64(st[0], _ZERO, _ZERO, _ZERO, k0, k1)
        st[2], st[3], st[4], st[5] = w0, w1, w2, w3
        st[0] += _ONE
        st[1] = _ZERO
    i = st[1]
    st[1] += _ONE
    return half_unit(st[2 + (i >> _ONE)], i & _ONE)


@nb.njit(cache=True, inline="always")
def step(kind, x, st, k0, k1, cq, cqp):
    """One move of X (kind 0) or Y (kind 1); forced moves draw nothing."""
    if kind == 0:
        if x == 0:
            return 1
        if x == 1:
            return 2
        u = uniform(st, k0, k1)
        if u < cq[x]:
            return x + 1
        if u < cqp[x]:
            return x - 1
        return x - 2
    if x == 1:
        return 0
    if x == 0:
        return 2
    u = uniform(st, k0, k1)
    if u < cq[x]:
        return x - 1
    if u < cqp[x]:
        return x + 1
    return x + 2


def thresholds(env, max_site):
    """Arrays cq, cqp indexed by site 0..max_site (sites 0, 1 unused)."""
    q, p1, _ = env.law(2, max_site + 1)
    cq = np.zeros(max_site + 1)
    cqp = np.zeros(max_site + 1)
    cq[2:] = q
    cqp[2:] = q + p1
    return cq, cqp

