"""Counter-based random streams.

Every path owns a stream identified by ``(seed, stream_index)``; the k-th
draw of a stream is a pure function of ``(seed, stream_index, k)``.  This is
what makes batch results independent of chunking and of the number of
workers: a path never consumes state shared with another path.

The construction is SplitMix64.  A stream's starting state is
``mix(seed ^ mix(stream_index + GAMMA))`` and its k-th output is
``mix(state + (k + 1) * GAMMA)``, where ``mix`` is the SplitMix64 finaliser.
All arithmetic is on uint64 with wrap-around, so results are bit-identical
on every platform numpy supports.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind == "i":
        arr = arr.astype(np.int64).view(np.uint64)
    return np.atleast_1d(arr.astype(np.uint64))


def stream_states(seed: int, streams) -> np.ndarray:
    """Starting SplitMix64 state for each stream index."""
    s = np.array([int(seed) & _MASK64], dtype=np.uint64)
    idx = _as_u64(streams)
    with np.errstate(over="ignore"):
        return _mix(s ^ _mix(idx + GAMMA))


def raw_draws(states: np.ndarray, counters) -> np.ndarray:
    """uint64 outputs; ``states`` has shape (n,), ``counters`` shape (k,) -> (n, k)."""
    c = _as_u64(counters)
    with np.errstate(over="ignore"):
        z = states[:, None] + (c[None, :] + np.uint64(1)) * GAMMA
    return _mix(z)


def uniforms(states: np.ndarray, counters) -> np.ndarray:
    """Doubles strictly inside (0, 1): the top 53 bits, centred in their cell."""
    bits = raw_draws(states, counters) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def derive_seed(base_seed: int, purpose: str) -> int:
    """Independent 63-bit seed for a named purpose (surface, hedge, ...)."""
    digest = hashlib.sha256(f"{int(base_seed)}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def uniforms(self, counters) -> np.ndarray:
        state = stream_states(self.seed, [self.stream_index])
        return uniforms(state, counters)[0]
