"""Counter-based random numbers keyed by (seed, trial, draw).

Philox4x32-10, vectorised over numpy arrays of counters. Any trial's draws
depend only on the seed and the trial index, so splitting trials across
workers or chunks never changes a result.
"""
from __future__ import annotations

import numpy as np

from .errors import ValidationError

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    ``counter`` is an (n, 4) array of uint32 words, ``key`` two uint32 words.
    Returns the (n, 4) uint32 output blocks.
    """
    c = np.asarray(counter, dtype=np.uint64).reshape(-1, 4)
    c0, c1, c2, c3 = (c[:, j].copy() for j in range(4))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ np.uint64(k0),
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ np.uint64(k1),
            p0 & _MASK,
        )
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def _key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed: int, trials, draw: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniforms in the open interval (0, 1) per trial index.

    ``draw`` selects the stream slot; the same (seed, trial, draw) always
    gives the same pair.
    """
    t = np.asarray(trials, dtype=np.uint64)
    if not (0 <= draw < 2**32):
        raise ValidationError("draw index must fit in 32 bits")
    ctr = np.empty((t.size, 4), dtype=np.uint64)
    ctr[:, 0] = t & _MASK
    ctr[:, 1] = t >> _SHIFT
    ctr[:, 2] = draw
    ctr[:, 3] = 0
    out = philox4x32(ctr, _key(seed)).astype(np.uint64)
    a = ((out[:, 0] << _SHIFT) | out[:, 1]) >> np.uint64(11)
    b = ((out[:, 2] << _SHIFT) | out[:, 3]) >> np.uint64(11)
    scale = 2.0**-53
    return (a.astype(np.float64) + 0.5) * scale, (b.astype(np.float64) + 0.5) * scale
