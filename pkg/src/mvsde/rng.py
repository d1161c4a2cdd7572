"""Counter-based random streams.

Every Gaussian variate used by the toolkit is a pure function of
``(seed, channel, step, stream, component)``.  The bits come from the
Philox4x32-10 block cipher (Salmon et al., SC'11), so any subset of
particles or time steps can be generated independently and in any order:
results do not depend on how work is split between threads.

Counter layout for one block of four 32-bit words::

    ctr = (step, stream, component_pair, channel)
    key = (seed & 0xffffffff, seed >> 32)

Each block yields two doubles with 53 random bits and, through Box-Muller,
two standard normals (components ``2j`` and ``2j + 1``).

Stream indices are particle indices.  An independent copy of an ensemble
uses the same seed with streams offset by ``N``; see :class:`StreamLineage`.
"""
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError, StreamCollisionError

__all__ = [
    "CHANNEL_NOISE",
    "CHANNEL_INITIAL",
    "CHANNEL_AUX",
    "CHANNEL_ORACLE",
    "StreamLineage",
    "philox4x32",
    "normals",
    "uniforms",
]

CHANNEL_NOISE = 0    # driving Wiener increments
CHANNEL_INITIAL = 1  # initial law
CHANNEL_AUX = 2      # auxiliary independent Wiener process (lift complement)
CHANNEL_ORACLE = 3   # Monte Carlo oracles not tied to a simulation

_MAX_STREAM = 2**32


@numba.njit(cache=True, nogil=True)
def _philox(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    w0 = np.uint64(0x9E3779B9)
    w1 = np.uint64(0xBB67AE85)
    mask = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    for r in range(10):
        if r > 0:
            k0 = (k0 + w0) & mask
            k1 = (k1 + w1) & mask
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> s32
        lo0 = p0 & mask
        hi1 = p1 >> s32
        lo1 = p1 & mask
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & mask, lo1, (hi0 ^ c3 ^ k1) & mask, lo0
    return c0, c1, c2, c3


@numba.njit(cache=True, nogil=True)
def _normal_pair(k0, k1, channel, step, stream, pair):
    r0, r1, r2, r3 = _philox(np.uint64(step), np.uint64(stream), np.uint64(pair),
                             np.uint64(channel), k0, k1)
    # 53-bit doubles: u1 in (0, 1], u2 in [0, 1)
    a = (r0 >> np.uint64(5)) * np.uint64(67108864) + (r1 >> np.uint64(6))
    b = (r2 >> np.uint64(5)) * np.uint64(67108864) + (r3 >> np.uint64(6))
    u1 = (np.float64(a) + 1.0) / 9007199254740992.0
    u2 = np.float64(b) / 9007199254740992.0
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return rad * np.cos(ang), rad * np.sin(ang)


@numba.njit(cache=True, nogil=True)
def _fill_normals(k0, k1, channel, step, streams, out):
    n, dim = out.shape
    npairs = (dim + 1) // 2
    for i in range(n):
        for j in range(npairs):
            z0, z1 = _normal_pair(k0, k1, channel, step, streams[i], j)
            out[i, 2 * j] = z0
            if 2 * j + 1 < dim:
                out[i, 2 * j + 1] = z1


@numba.njit(cache=True, nogil=True)
def _fill_uniforms(k0, k1, channel, step, streams, out):
    n, dim = out.shape
    npairs = (dim + 1) // 2
    for i in range(n):
        for j in range(npairs):
            r0, r1, r2, r3 = _philox(np.uint64(step), np.uint64(streams[i]), np.uint64(j),
                                     np.uint64(channel), k0, k1)
            a = (r0 >> np.uint64(5)) * np.uint64(67108864) + (r1 >> np.uint64(6))
            b = (r2 >> np.uint64(5)) * np.uint64(67108864) + (r3 >> np.uint64(6))
            out[i, 2 * j] = np.float64(a) / 9007199254740992.0
            if 2 * j + 1 < dim:
                out[i, 2 * j + 1] = np.float64(b) / 9007199254740992.0


def _key(seed):
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError(f"seed must lie in [0, 2**64), got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def _as_streams(streams):
    streams = np.ascontiguousarray(streams, dtype=np.int64)
    if streams.ndim != 1:
        raise ConfigurationError("streams must be a 1-d array of indices")
    if streams.size and (streams.min() < 0 or streams.max() >= _MAX_STREAM):
        raise ConfigurationError("stream indices must lie in [0, 2**32)")
    return streams


def philox4x32(counter, key):
    """Raw Philox4x32-10 block: four 32-bit counter words, two key words."""
    c = [np.uint64(int(v) & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in _philox(c[0], c[1], c[2], c[3], k[0], k[1]))


def normals(seed, channel, step, streams, dim, out=None):
    """Standard normal variates for one time step.

    Parameters
    ----------
    seed : int
        Master seed, ``0 <= seed < 2**64``.
    channel : int
        One of the ``CHANNEL_*`` constants.
    step : int
        Time-step index (the counter's first word).
    streams : array_like of int
        Stream (particle) indices; row ``i`` of the result belongs to
        ``streams[i]``.
    dim : int
        Number of components per stream.

    Returns
    -------
    numpy.ndarray
        Shape ``(len(streams), dim)``.
    """
    k0, k1 = _key(seed)
    streams = _as_streams(streams)
    if out is None:
        out = np.empty((streams.size, dim))
    _fill_normals(k0, k1, channel, step, streams, out)
    return out


def uniforms(seed, channel, step, streams, dim):
    """Uniform variates on ``[0, 1)``, same addressing as :func:`normals`."""
    k0, k1 = _key(seed)
    streams = _as_streams(streams)
    out = np.empty((streams.size, dim))
    _fill_uniforms(k0, k1, channel, step, streams, out)
    return out


@dataclass(frozen=True)
class StreamLineage:
    """Master seed plus a stream offset identifying one family of particles.

    Particle ``i`` of an ensemble with this lineage draws from stream
    ``offset + i``.
    """

    seed: int
    offset: int = 0

    def streams(self, n, start=0):
        return np.arange(self.offset + start, self.offset + start + n, dtype=np.int64)

    def shifted(self, by):
        return StreamLineage(self.seed, self.offset + by)

    def disjoint_from(self, other, n):
        """True when ``n`` streams of each lineage never coincide."""
        if self.seed != other.seed:
            return True
        return self.offset + n <= other.offset or other.offset + n <= self.offset

    def require_disjoint(self, other, n):
        if not self.disjoint_from(other, n):
            raise StreamCollisionError(
                f"stream lineages overlap: seed={self.seed}, offsets "
                f"{self.offset} and {other.offset} with {n} streams each")
