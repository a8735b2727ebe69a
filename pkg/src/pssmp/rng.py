"""Counter-based random numbers addressed by (seed, path, stream, counter).

Every draw is a pure function of its address, so a path's randomness does not
depend on which worker simulates it or on how paths are batched, and the numba
and numpy backends read exactly the same numbers.  Bits come from two rounds
of 64-bit finalizer mixing (SplitMix64 and MurmurHash3 fmix64 constants).
"""

from __future__ import annotations

import numpy as np

from ._accel import njit

_U = np.uint64
_S30, _S27, _S31, _S33, _S11 = _U(30), _U(27), _U(31), _U(33), _U(11)
_M1, _M2 = _U(0xBF58476D1CE4E5B9), _U(0x94D049BB133111EB)
_F1, _F2 = _U(0xFF51AFD7ED558CCD), _U(0xC4CEB9FE1A85EC53)
_GOLD = _U(0x9E3779B97F4A7C15)
_ONE, _TWO = _U(1), _U(2)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi

# stream ids
NORMAL = 0
ARRIVAL = 1
MARK = 2
KILL = 3
THIN = 4

SEED_MAX = 2**64 - 1


@njit
def _splitmix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def _fmix(z):
    z = (z ^ (z >> _S33)) * _F1
    z = (z ^ (z >> _S33)) * _F2
    return z ^ (z >> _S33)


@njit
def stream_key(seed, path, stream):
    """64-bit key for one stream of one path (all arguments uint64)."""
    k = _splitmix(seed + _GOLD * (path + _ONE))
    return _splitmix(k ^ _fmix(stream + _GOLD))


@njit
def uniform(key, ctr):
    """Uniform on the open interval (0, 1)."""
    bits = _fmix(key ^ _splitmix(ctr * _GOLD + _ONE))
    return (float(bits >> _S11) + 0.5) * _INV53


@njit
def normal(key, ctr):
    u1 = uniform(key, ctr * _TWO)
    u2 = uniform(key, ctr * _TWO + _ONE)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


# vectorised twins; uint64 arrays wrap on overflow exactly like the scalar code


def _splitmix_v(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _fmix_v(z):
    z = (z ^ (z >> _S33)) * _F1
    z = (z ^ (z >> _S33)) * _F2
    return z ^ (z >> _S33)


def stream_keys(seed: int, paths, stream: int) -> np.ndarray:
    """Keys for many paths of one stream; ``paths`` is an array of path indices."""
    p = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        k = _splitmix_v(np.full(p.shape, seed, dtype=np.uint64) + _GOLD * (p + _ONE))
        s = _fmix_v(np.full(p.shape, stream, dtype=np.uint64) + _GOLD)
        return _splitmix_v(k ^ s)


def uniforms(keys: np.ndarray, ctrs) -> np.ndarray:
    c = np.asarray(ctrs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = _fmix_v(keys ^ _splitmix_v(c * _GOLD + _ONE))
    return ((bits >> _S11).astype(np.float64) + 0.5) * _INV53


def normals(keys: np.ndarray, ctrs) -> np.ndarray:
    c = np.asarray(ctrs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        u1 = uniforms(keys, c * _TWO)
        u2 = uniforms(keys, c * _TWO + _ONE)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


class PathStreams:
    """Sequential reader over one path's streams, for the reference (single-path) APIs."""

    def __init__(self, seed: int, path: int = 0):
        self.seed = check_seed(seed)
        self.path = int(path)
        self._keys = {s: stream_keys(self.seed, [self.path], s) for s in (NORMAL, ARRIVAL, MARK, KILL, THIN)}

    def normal(self, ctr: int) -> float:
        return float(normals(self._keys[NORMAL], [ctr])[0])

    def uniform(self, stream: int, ctr: int) -> float:
        return float(uniforms(self._keys[stream], [ctr])[0])
