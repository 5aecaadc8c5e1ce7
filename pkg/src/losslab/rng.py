"""Counter-based random streams.

Every draw is a pure function of ``(master_seed, stream_name, path, counter)``.
Nothing is stateful, so code paths that consume a different number of draws
(an RK2 step evaluates the gradient twice) can never desynchronise the
initialisation, shuffle or dropout streams shared between runs.

Bit-exact construction (all arithmetic modulo 2**64)::

    mix(z):   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
              return z ^ (z >> 31)
    name_hash = FNV-1a-64(utf8(stream_name))
    base      = mix(master_seed ^ mix(name_hash))
    for i in path:  base = mix(base ^ mix(i + GOLDEN))
    raw(c)    = mix(base + (c + 1) * GOLDEN)        GOLDEN = 0x9E3779B97F4A7C15
    uniform(c) = (raw(c) >> 11) * 2**-53            in [0, 1)

``raw`` is the SplitMix64 sequence started at ``base``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

STREAM_NAMES = ("init", "shuffle", "dropout", "data_synth")

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_C1 = 0xBF58476D1CE4E5B9
MIX_C2 = 0x94D049BB133111EB
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_TWO_M53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_C1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_C2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_C1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_C2)
    return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class Stream:
    """A named stream; ``path`` selects an independent sub-stream.

    Training uses ``Stream(seed, "shuffle", (epoch,))`` and
    ``Stream(seed, "dropout", (epoch, batch, layer))``.
    """

    master_seed: int
    name: str
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if self.name not in STREAM_NAMES:
            raise ValueError(f"unknown stream name {self.name!r}; expected one of {STREAM_NAMES}")
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if any(i < 0 for i in self.path):
            raise ValueError("sub-stream indices must be non-negative")

    @property
    def base(self) -> int:
        h = mix64(self.master_seed ^ mix64(fnv1a64(self.name)))
        for i in self.path:
            h = mix64(h ^ mix64((i + GOLDEN) & MASK64))
        return h

    def child(self, *indices: int) -> "Stream":
        return Stream(self.master_seed, self.name, self.path + tuple(indices))

    def raw(self, start: int, n: int) -> np.ndarray:
        """``n`` raw 64-bit outputs at counters ``start .. start+n-1``."""
        counters = np.arange(n, dtype=np.uint64) + np.uint64(start + 1)
        return _mix64_array(np.uint64(self.base) + counters * np.uint64(GOLDEN))

    def uniforms(self, start: int, n: int) -> np.ndarray:
        return (self.raw(start, n) >> np.uint64(11)).astype(np.float64) * _TWO_M53

    def gaussians(self, start: int, n: int) -> np.ndarray:
        """Box-Muller; sample i consumes counters ``start+2i`` and ``start+2i+1``."""
        u = self.uniforms(start, 2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class StreamKey:
    stream: Stream
    counter: int


def draw_uniform(key: StreamKey) -> float:
    return float(key.stream.uniforms(key.counter, 1)[0])


def draw_gaussian(key: StreamKey) -> float:
    return float(key.stream.gaussians(key.counter, 1)[0])


def shuffle_indices(key: StreamKey, n: int) -> np.ndarray:
    """Fisher-Yates permutation of ``range(n)`` consuming ``n - 1`` counters."""
    perm = np.arange(n, dtype=np.int64)
    if n < 2:
        return perm
    u = key.stream.uniforms(key.counter, n - 1)
    # step k swaps position i = n-1-k with j drawn uniformly from [0, i]
    js = (u * np.arange(n, 1, -1, dtype=np.float64)).astype(np.int64)
    for i, j in zip(range(n - 1, 0, -1), js.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def stream_digest(values: np.ndarray) -> str:
    """Short hex digest of an array, used to log that runs shared randomness."""
    arr = np.ascontiguousarray(values)
    return hashlib.sha256(arr.dtype.str.encode() + arr.tobytes()).hexdigest()[:16]
