"""Counter-keyed Gaussian noise.

Every normal variate is a pure function of a 192-bit key/counter tuple fed
through Philox4x32-10, so identical keys give bit-identical variates no matter
how many workers evaluate them or in what order.  This is what makes shared
Brownian paths and thread-count-independent Monte Carlo possible.

Counter layout (32-bit words):
    word0  box index
    word1  realization index
    word2  step index
    word3  block | purpose<<8 | backward<<11 | sample<<16
Key: the 64-bit master seed split into two words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Philox4x32 round multipliers and Weyl key increments (Salmon et al. 2011).
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

PURPOSE_PATH = 0  # Brownian path increments
PURPOSE_DIRECTION = 1  # tangent-direction sampling
PURPOSE_TRIAL = 2  # generic randomized trials


@dataclass(frozen=True)
class NoiseKey:
    """Address of a single standard-normal variate."""

    master_seed: int
    box_index: int = 0
    sample_index: int = 0
    realization_index: int = 0
    step_index: int = 0
    component: int = 0


def _philox4x32(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block per counter entry; all args uint64 arrays
    holding 32-bit values.  Returns four uint64 arrays of 32-bit words."""
    x0, x1, x2, x3 = c0, c1, c2, c3
    for _ in range(10):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return x0, x1, x2, x3


def _to_unit(hi, lo):
    """Two 32-bit words -> one double uniform in (0, 1), 53 random bits."""
    bits = (hi >> np.uint64(5)) * np.uint64(1 << 26) + (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def _pack_word3(block, purpose, backward, sample):
    word = (
        np.uint64(block)
        | (np.uint64(purpose) << np.uint64(8))
        | (np.uint64(bool(backward)) << np.uint64(11))
    )
    return word | ((np.asarray(sample, dtype=np.uint64) & np.uint64(0xFFFF)) << np.uint64(16))


def normal_pair(master_seed, box, realization, sample, step, block,
                purpose=PURPOSE_PATH, backward=False):
    """Two independent standard normals per counter entry (Box-Muller).

    box / realization / sample may be scalars or equal-length integer arrays;
    the outputs broadcast accordingly.
    """
    seed = np.uint64(np.uint64(master_seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    k0 = np.uint64(seed & _MASK32)
    k1 = np.uint64(seed >> np.uint64(32))
    c0 = np.asarray(box, dtype=np.uint64) & _MASK32
    c1 = np.asarray(realization, dtype=np.uint64) & _MASK32
    c2 = np.uint64(int(step) & 0xFFFFFFFF)
    c3 = _pack_word3(block, purpose, backward, sample)
    c0, c1, c3 = np.broadcast_arrays(c0, c1, c3)
    y0, y1, y2, y3 = _philox4x32(c0, c1, np.broadcast_to(c2, c0.shape), c3, k0, k1)
    u1 = _to_unit(y0, y1)
    u2 = _to_unit(y2, y3)
    r = np.sqrt(-2.0 * np.log(u1))
    ang = (2.0 * np.pi) * u2
    return r * np.cos(ang), r * np.sin(ang)


def standard_normals(master_seed, box, realization, sample, step, dim,
                     purpose=PURPOSE_PATH, backward=False):
    """Standard-normal block of shape broadcast(box, realization, sample) + (dim,)."""
    cols = []
    for blk in range((dim + 1) // 2):
        z0, z1 = normal_pair(master_seed, box, realization, sample, step, blk,
                             purpose=purpose, backward=backward)
        cols.append(z0)
        cols.append(z1)
    return np.stack(cols[:dim], axis=-1)


def normal_from_key(key: NoiseKey, purpose=PURPOSE_PATH, backward=False) -> float:
    """The single variate addressed by a NoiseKey (component-indexed)."""
    blk, lane = divmod(key.component, 2)
    pair = normal_pair(key.master_seed, key.box_index, key.realization_index,
                       key.sample_index, key.step_index, blk,
                       purpose=purpose, backward=backward)
    return float(pair[lane])


def unit_directions(master_seed, count, dim, box=0, realization=0):
    """Deterministic uniform sample of `count` unit vectors on S^{dim-1}."""
    idx = np.arange(count, dtype=np.uint64)
    z = standard_normals(master_seed, box, realization, idx, 0, dim,
                         purpose=PURPOSE_DIRECTION)
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    # A zero draw has probability ~0; regenerate deterministically just in case.
    bad = norms[:, 0] < 1e-12
    if np.any(bad):
        z2 = standard_normals(master_seed, box, realization, idx[bad], 1, dim,
                              purpose=PURPOSE_DIRECTION)
        z[bad] = z2
        norms = np.linalg.norm(z, axis=-1, keepdims=True)
    return z / norms
