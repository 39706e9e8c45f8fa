"""Seed derivation and counter-based random numbers.

Stochastic imputers draw per-(row, completion) random numbers by hashing
the row key instead of advancing a shared generator. The same row then
receives the same draws whether it is imputed alone or inside a batch,
and parallel execution order never changes results.
"""
import zlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def key_of(value):
    """Map a row key component (int or str) to a uint64."""
    if isinstance(value, (str, bytes)):
        data = value.encode() if isinstance(value, str) else value
        return np.uint64(zlib.crc32(data))
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def _as_keys(k):
    if isinstance(k, np.ndarray) and k.dtype.kind in "iu":
        return k.astype(np.uint64)
    if isinstance(k, np.ndarray):
        return np.array([key_of(v) for v in k.tolist()], dtype=np.uint64)
    return key_of(k)


def hashed_uniform(seed, *keys):
    """Uniform(0, 1) variates that are a pure function of ``(seed, *keys)``.

    Each key may be a scalar or an array; arrays broadcast against each
    other. Values lie strictly inside (0, 1).
    """
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        for k in keys:
            h = _splitmix(h ^ _as_keys(k))
        bits = (h >> np.uint64(11)).astype(np.float64)
    return (bits + 0.5) / 9007199254740992.0


def hashed_normal(seed, *keys):
    return ndtri(hashed_uniform(seed, *keys))


def derive_seed(seed, *labels):
    """Derive an independent integer seed from a master seed and labels."""
    entropy = [int(seed)] + [int(key_of(x)) for x in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])
