"""Counter-based random numbers keyed by (seed, stream, step, channel).

Philox4x64-10 is evaluated elementwise on ``uint64`` arrays so that a whole
batch of trajectories draws its increments in one vectorized call, while
every value stays a pure function of its key. The bit stream is identical
to ``numpy.random.Philox`` for the same key and counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# Key word 1 separates independent uses of the same seed.
GAUSSIAN_DOMAIN = 0
UNIFORM_DOMAIN = 1


def _mulhilo(a: np.ndarray, m: np.uint64) -> tuple[np.ndarray, np.ndarray]:
    a_lo, a_hi = a & _LO32, a >> _S32
    m_lo, m_hi = m & _LO32, m >> _S32
    lo_lo = a_lo * m_lo
    hi_lo = a_hi * m_lo
    lo_hi = a_lo * m_hi
    cross = (lo_lo >> _S32) + (hi_lo & _LO32) + lo_hi
    hi = a_hi * m_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * m


def philox4x64(counter, key) -> np.ndarray:
    """Ten-round Philox on broadcast ``counter`` (4 words) and ``key`` (2 words).

    ``counter`` and ``key`` are sequences of ``uint64`` arrays; the result has
    shape ``(4,) + broadcast shape``.
    """
    with np.errstate(over="ignore"):
        c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
        k0, k1 = (np.asarray(k, dtype=np.uint64) for k in key)
        c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(c0, c1, c2, c3, k0, k1)
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(c0, _M0)
            hi1, lo1 = _mulhilo(c2, _M1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3])


def to_unit(bits: np.ndarray) -> np.ndarray:
    """53-bit uniforms in ``[0, 1)``."""
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def normals(seed: int, streams, step: int, count: int) -> np.ndarray:
    """Standard normals of shape ``(len(streams), count)``.

    Entry ``[j, c]`` depends only on ``(seed, streams[j], step, c)``. Each
    Philox block yields four uniforms, turned into four normals by
    Box-Muller on pairs.
    """
    streams = np.asarray(streams, dtype=np.uint64)
    n_blocks = (count + 3) // 4
    block = np.arange(n_blocks, dtype=np.uint64)
    bits = philox4x64(
        (np.uint64(step), streams[:, None], block[None, :], np.uint64(0)),
        (np.uint64(seed), np.uint64(GAUSSIAN_DOMAIN)),
    )
    u = to_unit(bits)
    radius1 = np.sqrt(-2.0 * np.log1p(-u[0]))
    radius2 = np.sqrt(-2.0 * np.log1p(-u[2]))
    angle1 = 2.0 * np.pi * u[1]
    angle2 = 2.0 * np.pi * u[3]
    z = np.stack([radius1 * np.cos(angle1), radius1 * np.sin(angle1), radius2 * np.cos(angle2), radius2 * np.sin(angle2)])
    # (4, J, blocks) -> (J, blocks * 4), channel c = 4 * block + position
    return np.moveaxis(z, 0, -1).reshape(streams.shape[0], 4 * n_blocks)[:, :count]


def uniforms(seed: int, streams, step: int) -> np.ndarray:
    """One uniform in ``[0, 1)`` per stream, keyed by ``(seed, stream, step)``."""
    streams = np.asarray(streams, dtype=np.uint64)
    bits = philox4x64(
        (np.uint64(step), streams, np.uint64(0), np.uint64(0)),
        (np.uint64(seed), np.uint64(UNIFORM_DOMAIN)),
    )
    return to_unit(bits[0])


@dataclass(frozen=True)
class RngStream:
    """Increments of a single trajectory; equal fields give equal draws."""

    seed: int
    stream_id: int

    def normals(self, step: int, count: int) -> np.ndarray:
        return normals(self.seed, [self.stream_id], step, count)[0]

    def uniform(self, step: int) -> float:
        return float(uniforms(self.seed, [self.stream_id], step)[0])


def derive_seed(*words: int) -> int:
    """Deterministic 64-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence(list(words)).generate_state(1, np.uint64)[0])
