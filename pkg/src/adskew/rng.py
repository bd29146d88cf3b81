"""Portable, counter-based random streams built on SplitMix64.

SplitMix64 (Steele, Lea & Flood, 2014) is a 64-bit generator with a fixed,
published algorithm: the state advances by a constant and is passed through an
avalanche finalizer. Because the state is just ``key + j * GAMMA``, the j-th
output of a stream can be computed directly, so numpy can generate whole
blocks at once and the numba kernels can step draw-by-draw while producing the
same integers.

Streams are identified by a 64-bit key derived from ``(seed, index, ...)``;
each replication, day, or Monte Carlo draw gets its own key, which makes the
output independent of execution order.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB
TWO_NEG_53 = 1.0 / (1 << 53)

_U_GAMMA = np.uint64(GAMMA)
_U_MUL1 = np.uint64(MUL1)
_U_MUL2 = np.uint64(MUL2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64(z: int) -> int:
    """SplitMix64 output finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, *indices: int) -> int:
    """Derive a stream key from a seed and any number of stream indices."""
    key = mix64((int(seed) & MASK64) + GAMMA)
    for index in indices:
        key = mix64(key ^ mix64((int(index) + 1) * GAMMA))
    return key


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _U_MUL1
    z = (z ^ (z >> _S27)) * _U_MUL2
    return z ^ (z >> _S31)


def to_unit(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit outputs to doubles strictly inside (0, 1)."""
    return ((bits >> _S11).astype(np.float64) + 0.5) * TWO_NEG_53


def raw_block(key: int, start: int, n: int) -> np.ndarray:
    """Outputs ``start .. start+n-1`` of the stream ``key`` as uint64."""
    counters = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(np.uint64(key) + counters * _U_GAMMA)


def uniform_block(key: int, start: int, n: int) -> np.ndarray:
    return to_unit(raw_block(key, start, n))


def uniform_scalar(key: int, j: int) -> float:
    return ((mix64(key + (j + 1) * GAMMA) >> 11) + 0.5) * TWO_NEG_53


def draw_keys(key: int, n: int) -> np.ndarray:
    """Per-draw stream keys: ``stream_key``-style derivation for indices 0..n-1."""
    idx = mix64_array((np.arange(n, dtype=np.uint64) + np.uint64(1)) * _U_GAMMA)
    return mix64_array(np.uint64(key) ^ idx)


# scalar libm calls; numpy's SIMD log/exp round differently from numba's
_vlog = np.frompyfunc(math.log, 1, 1)
_vexp = np.frompyfunc(math.exp, 1, 1)
_vlog1p = np.frompyfunc(math.log1p, 1, 1)
_vcos = np.frompyfunc(math.cos, 1, 1)


def libm_log(x: np.ndarray) -> np.ndarray:
    return _vlog(x).astype(np.float64)


def libm_exp(x: np.ndarray) -> np.ndarray:
    return _vexp(x).astype(np.float64)


def libm_log1p(x: np.ndarray) -> np.ndarray:
    return _vlog1p(x).astype(np.float64)


def libm_cos(x: np.ndarray) -> np.ndarray:
    return _vcos(x).astype(np.float64)


def standard_normal_pairs(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Box-Muller transform (cosine branch) of two uniform blocks."""
    return np.sqrt(-2.0 * libm_log(u1)) * libm_cos(2.0 * math.pi * u2)
