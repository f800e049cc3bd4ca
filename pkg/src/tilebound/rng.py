"""Counter-based random number streams and deterministic variate transforms.

Every replication of every tile owns a private substream addressed by
(master_seed, tile_index, rep_index, draw_index) through Philox4x32-10.
Substreams never overlap, are reproducible from the master seed alone, and
make simulation results independent of batching and worker scheduling.

Two call surfaces are provided on purpose:

* jitted index-based primitives (``uniform_at``, ``gamma_at``, ``beta_at``)
  that trial kernels inline, and
* stream objects (`UniformStream`, `FixedStream`) plus pure-Python draws
  (`gamma_draw`, `beta_draw`) used by the scalar trial implementations.

The two routes must stay in lockstep draw for draw; tests assert
bit-identical output between them.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import InternalError

# Philox4x32 round constants (Salmon et al. multipliers and Weyl increments).
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

# Fixed fourth counter word; separates this application's streams from any
# other Philox user sharing the same seed.
STREAM_DOMAIN = np.uint64(0x74696C65)

_INV_2_53 = 1.1102230246251565e-16  # 2**-53
_TINY_P = 1.1102230246251565e-16  # clamp for quantile/log arguments

# High draw indices signal a runaway rejection loop rather than real use;
# trials consume at most a few thousand draws.
MAX_DRAWS_PER_REP = 1 << 31


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block: four 32-bit words from counter+key words."""
    c0 = np.uint64(c0) & _MASK32
    c1 = np.uint64(c1) & _MASK32
    c2 = np.uint64(c2) & _MASK32
    c3 = np.uint64(c3) & _MASK32
    k0 = np.uint64(k0) & _MASK32
    k1 = np.uint64(k1) & _MASK32
    for _ in range(10):
        p0 = c0 * _M0
        p1 = c2 * _M1
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        c0 = (hi1 ^ c1 ^ k0) & _MASK32
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK32
        c3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@njit(cache=True)
def uniform_at(master_lo, master_hi, tile_index, rep_index, draw_index):
    """The draw_index-th uniform double in [0,1) of one replication's substream."""
    x0, x1, _, _ = philox4x32(
        np.uint64(draw_index),
        np.uint64(rep_index),
        np.uint64(tile_index),
        STREAM_DOMAIN,
        np.uint64(master_lo),
        np.uint64(master_hi),
    )
    bits = ((x0 << np.uint64(32)) | x1) >> np.uint64(11)
    return float(bits) * _INV_2_53


@njit(cache=True)
def ppnd16(p):
    """Inverse standard normal CDF (Wichura's AS241 PPND16, double precision)."""
    if p < _TINY_P:
        p = _TINY_P
    elif p > 1.0 - _TINY_P:
        p = 1.0 - _TINY_P
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        return -val
    return val


@njit(cache=True)
def gamma_at(shape, master_lo, master_hi, tile_index, rep_index, draw_index):
    """Gamma(shape, 1) draw for shape >= 1 by Marsaglia-Tsang squeeze/accept.

    Consumes a data-dependent number of uniforms starting at draw_index;
    returns (value, next_draw_index).
    """
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    idx = draw_index
    while True:
        u1 = uniform_at(master_lo, master_hi, tile_index, rep_index, idx)
        idx += 1
        x = ppnd16(u1)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u2 = uniform_at(master_lo, master_hi, tile_index, rep_index, idx)
        idx += 1
        xx = x * x
        if u2 < 1.0 - 0.0331 * xx * xx:
            return d * v, idx
        if u2 < _TINY_P:
            u2 = _TINY_P
        if math.log(u2) < 0.5 * xx + d * (1.0 - v + math.log(v)):
            return d * v, idx


@njit(cache=True)
def beta_at(a, b, master_lo, master_hi, tile_index, rep_index, draw_index):
    """Beta(a, b) draw for a, b >= 1 as a ratio of two gamma draws.

    Returns (value, next_draw_index).
    """
    ga, idx = gamma_at(a, master_lo, master_hi, tile_index, rep_index, draw_index)
    gb, idx = gamma_at(b, master_lo, master_hi, tile_index, rep_index, idx)
    s = ga + gb
    if s <= 0.0:
        return 0.5, idx
    return ga / s, idx


def split_seed(master_seed):
    """Split a 64-bit master seed into the two 32-bit Philox key words."""
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


class UniformStream:
    """Sequential view of one replication's substream.

    Counter-based, so it never runs out; `consumed` reports how many draws
    the trial actually used, which the adaptivity tests rely on.
    """

    def __init__(self, master_seed, tile_index, rep_index):
        self._lo, self._hi = split_seed(master_seed)
        self._tile = int(tile_index)
        self._rep = int(rep_index)
        self._idx = 0

    @property
    def consumed(self):
        return self._idx

    def next(self):
        if self._idx >= MAX_DRAWS_PER_REP:
            raise InternalError("replication substream exceeded its draw budget")
        u = uniform_at(self._lo, self._hi, self._tile, self._rep, self._idx)
        self._idx += 1
        return u


class FixedStream:
    """Stream double fed from an explicit list of uniforms (tests, examples).

    Exhaustion raises InternalError: real streams are sized up front from
    tau_max, so running dry means a sizing bug.
    """

    def __init__(self, values):
        self._values = [float(v) for v in values]
        self._idx = 0

    @property
    def consumed(self):
        return self._idx

    def next(self):
        if self._idx >= len(self._values):
            raise InternalError("fixed stream exhausted: trial consumed more draws than supplied")
        u = self._values[self._idx]
        self._idx += 1
        return u


def normal_draw(stream):
    """Standard normal from one uniform via the inverse CDF."""
    return ppnd16(stream.next())


def gamma_draw(shape, stream):
    """Gamma(shape, 1) for shape >= 1; pure-Python twin of `gamma_at`."""
    if shape < 1.0:
        raise ValueError(f"gamma shape must be >= 1, got {shape}")
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = ppnd16(stream.next())
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u2 = stream.next()
        xx = x * x
        if u2 < 1.0 - 0.0331 * xx * xx:
            return d * v
        if u2 < _TINY_P:
            u2 = _TINY_P
        if math.log(u2) < 0.5 * xx + d * (1.0 - v + math.log(v)):
            return d * v


def beta_draw(a, b, stream):
    """Beta(a, b) for a, b >= 1 via the gamma-ratio identity; twin of `beta_at`."""
    ga = gamma_draw(a, stream)
    gb = gamma_draw(b, stream)
    s = ga + gb
    if s <= 0.0:
        return 0.5
    return ga / s
