"""Counter-based Philox4x64-10 generator usable inside numba kernels.

Every trajectory owns the key ``(seed, index)`` and draws block ``c`` of four
64-bit words by encrypting the counter ``(c, 0, 0, 0)``.  Draws therefore
depend only on (seed, index, draw number), never on scheduling.
"""
import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@nb.njit(cache=True, inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    hi0, lo0 = _mulhilo(_M0, c0)
    hi1, lo1 = _mulhilo(_M1, c2)
    return hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0


@nb.njit(cache=True, inline="always")
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on the 256-bit counter; returns four uint64 words.

    Rounds are written out: numba does not unroll the loop form, which is
    about four times slower.
    """
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    return _round(c0, c1, c2, c3, k0, k1)


@nb.njit(cache=True, inline="always")
def to_unit(word):
    """Map a uint64 to a double in [0, 1) using its top 53 bits."""
    return float(np.int64(word >> _S11)) * _INV53


_LO32_F = 1.0 / 4294967296.0


@nb.njit(cache=True, inline="always")
def half_unit(word, low):
    """Uniform in [0, 1) from the high (low == 0) or low 32 bits of ``word``."""
    h = (word & _LO32) if low else (word >> _S32)
    return float(np.int64(h)) * _LO32_F


class Stream:
    """Python-side view of one (seed, index) stream, for tests and small draws."""

    def __init__(self, seed, index):
        self.k0 = np.uint64(seed)
        self.k1 = np.uint64(index)
        self.block = 0
        self._buf = []
        self._half = []

    def raw(self):
        if not self._buf:
            words = philox4x64(np.uint64(self.block), np.uint64(0), np.uint64(0),
                               np.uint64(0), self.k0, self.k1)
            self._buf = list(words)[::-1]
            self.block += 1
        return self._buf.pop()

    def uniform(self):
        """Same sequence as the kernels: two 32-bit halves per word, high first."""
        if not self._half:
            w = np.uint64(self.raw())
            self._half = [half_unit(w, 1), half_unit(w, 0)]
        return self._half.pop()
