"""Exact event-driven simulation of the firm-value process and its default time.

Between jumps X is affine with slope mu > 0, so it can only cross below zero
at a jump; scanning the jump epochs finds the default time exactly.

Path arithmetic convention (shared by every module so that results agree
bit-for-bit): the drift-plus-jumps part S_j = mu * t_j + cumsum(Y)_j is formed
first and the level is X = x0 + S.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .levy_model import LevyModel
from .outputs import atomic_open
from .rng import RngStream, stream_states, uniforms

CHUNK = 8192


@dataclass(frozen=True, eq=False)
class SamplePath:
    model: LevyModel
    horizon: float
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    seed: Optional[int] = None
    stream: Optional[int] = None
    tau: Optional[float] = None

    @property
    def u(self) -> float:
        return self.model.u

    @property
    def model_id(self) -> str:
        return repr(self.model.to_dict())

    @property
    def drift_jumps(self) -> np.ndarray:
        """S at each jump epoch (right values)."""
        return self.model.mu * self.jump_times + np.cumsum(self.jump_sizes)

    @property
    def jump_values(self) -> np.ndarray:
        return self.model.u + self.drift_jumps

    def value(self, t: float) -> float:
        return sample_at(self, t)

    def left_limit(self, t: float) -> float:
        return sample_at(self, t, left=True)

    @classmethod
    def from_jumps(cls, model: LevyModel, horizon: float, times, sizes) -> "SamplePath":
        times = np.asarray(times, dtype=float)
        sizes = np.asarray(sizes, dtype=float)
        if times.shape != sizes.shape:
            raise ValueError("jump times and sizes must have the same length")
        if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > horizon):
            raise ValueError("jump times must be strictly increasing inside (0, T]")
        tau = default_time(model.u, model.mu, times, sizes)
        return cls(model, float(horizon), times, sizes, tau=tau)


def default_time(u: float, mu: float, times, sizes) -> Optional[float]:
    """First jump epoch at which u + S drops strictly below zero, else None."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return None
    x = u + (mu * times + np.cumsum(np.asarray(sizes, dtype=float)))
    hit = np.flatnonzero(x < 0)
    return float(times[hit[0]]) if hit.size else None


def sample_at(path: SamplePath, t: float, left: bool = False) -> float:
    """X(t), or the left limit X(t-) when ``left`` is set."""
    if not (0.0 <= t <= path.horizon):
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    side = "left" if left else "right"
    n = int(np.searchsorted(path.jump_times, t, side=side))
    c = float(np.cumsum(path.jump_sizes[:n])[-1]) if n else 0.0
    return path.model.u + (path.model.mu * t + c)


@dataclass
class JumpBlock:
    """Jump epochs of several paths, padded to a rectangle.

    ``times`` is +inf and ``sizes`` 0 past each row's ``counts``.  ``C`` is
    cumsum(Y) and ``S`` = mu * t_j + C_j at real epochs (+inf elsewhere).
    """

    mu: float
    times: np.ndarray
    sizes: np.ndarray
    counts: np.ndarray
    C: np.ndarray
    S: np.ndarray
    streams: np.ndarray

    def levels(self, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        return (x0[:, None] if x0.ndim else x0) + self.S

    def default_index(self, x0) -> np.ndarray:
        """Index of the defaulting jump per row, -1 when the row survives."""
        below = self.levels(x0) < 0
        idx = np.argmax(below, axis=1)
        return np.where(below[np.arange(below.shape[0]), idx], idx, -1)

    def tau(self, x0) -> np.ndarray:
        idx = self.default_index(x0)
        rows = np.arange(idx.size)
        return np.where(idx >= 0, self.times[rows, np.maximum(idx, 0)], np.inf)

    def left_S(self) -> np.ndarray:
        """S just before each jump: mu * t_j + C_{j-1}."""
        n = self.C.shape[0]
        prev = np.concatenate([np.zeros((n, 1)), self.C[:, :-1]], axis=1)
        return self.mu * self.times + prev

    def counts_at(self, t) -> np.ndarray:
        """Number of jumps in [0, t_i] per row, shape (n, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.times.shape[0], t.size), dtype=np.int64)
        for r in range(self.times.shape[0]):
            out[r] = np.searchsorted(self.times[r, : self.counts[r]], t, side="right")
        return out

    def S_at(self, t, counts=None) -> np.ndarray:
        """S(t) = mu * t + C_{N_t} per row, shape (n, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = self.counts_at(t) if counts is None else counts
        padded = np.concatenate([np.zeros((self.C.shape[0], 1)), self.C], axis=1)
        return self.mu * t[None, :] + np.take_along_axis(padded, k, axis=1)

    def running_min_at(self, t, counts=None) -> np.ndarray:
        """min(0, min over jump epochs <= t of S), shape (n, len(t))."""
        k = self.counts_at(t) if counts is None else counts
        rm = np.minimum.accumulate(self.S, axis=1) if self.S.shape[1] else self.S
        padded = np.concatenate([np.zeros((self.S.shape[0], 1)), np.minimum(rm, 0.0)], axis=1)
        return np.take_along_axis(padded, k, axis=1)


def _initial_width(model: LevyModel, T: float) -> int:
    m = model.lam * T
    return int(math.ceil(m + 6.0 * math.sqrt(m) + 8.0))


def simulate_block(model: LevyModel, T: float, seed: int, streams) -> JumpBlock:
    """Simulate the jump part of paths for the given stream indices.

    Inter-arrival k of a stream uses counter 2k, jump size k counter 2k+1.
    Rows needing more than the initial number of draws are extended in
    further blocks of the same width, so a row is identical whether it is
    simulated alone or in a batch.
    """
    streams = np.atleast_1d(np.asarray(streams, dtype=np.int64))
    n = streams.size
    width = _initial_width(model, T)
    states = stream_states(seed, streams)
    if model.lam == 0:
        times = np.full((n, 0), np.inf)
        sizes = np.zeros((n, 0))
    else:
        cols_t = []
        last = np.zeros(n)
        active = np.arange(n)
        k0 = 0
        while active.size:
            ctr = 2 * np.arange(k0, k0 + width)
            e = -np.log(uniforms(states[active], ctr)) / model.lam
            block = np.cumsum(np.concatenate([last[active, None], e], axis=1), axis=1)[:, 1:]
            full = np.full((n, width), np.inf)
            full[active] = block
            cols_t.append(full)
            last[active] = block[:, -1]
            active = active[block[:, -1] <= T]
            k0 += width
        times = np.concatenate(cols_t, axis=1)
        times[times > T] = np.inf
        kmax = int(np.max(np.sum(np.isfinite(times), axis=1), initial=0))
        times = times[:, :kmax]
        if kmax:
            u_y = uniforms(states, 2 * np.arange(kmax) + 1)
            sizes = model.jump_law.from_uniform(u_y)
            sizes = np.where(np.isfinite(times), sizes, 0.0)
        else:
            sizes = np.zeros((n, 0))
    counts = np.sum(np.isfinite(times), axis=1)
    C = np.cumsum(sizes, axis=1)
    with np.errstate(invalid="ignore"):
        S = np.where(np.isfinite(times), model.mu * times + C, np.inf)
    return JumpBlock(model.mu, times, sizes, counts, C, S, streams)


def simulate_path(model: LevyModel, T: float, rng_stream: RngStream) -> SamplePath:
    if not T > 0:
        raise ValueError("horizon T must be > 0")
    blk = simulate_block(model, T, rng_stream.seed, [rng_stream.stream_index])
    return _row_to_path(model, T, blk, 0, rng_stream.seed)


def _row_to_path(model, T, blk: JumpBlock, r: int, seed: int) -> SamplePath:
    c = int(blk.counts[r])
    times = blk.times[r, :c].copy()
    sizes = blk.sizes[r, :c].copy()
    idx = int(blk.default_index(model.u)[r])
    tau = float(times[idx]) if idx >= 0 else None
    return SamplePath(model, float(T), times, sizes, seed=seed, stream=int(blk.streams[r]), tau=tau)


def chunk_ranges(n_paths: int, chunk: int = CHUNK):
    return [(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]


def map_chunks(fn, n_paths: int, parallelism: int = 1, chunk: int = CHUNK) -> list:
    """Apply ``fn(start, stop)`` over a fixed partition of path indices.

    Results come back in chunk order whatever the worker count, so
    downstream reductions are reproducible.
    """
    ranges = chunk_ranges(n_paths, chunk)
    if parallelism <= 1 or len(ranges) == 1:
        return [fn(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda ab: fn(*ab), ranges))


@dataclass
class BatchResult:
    n_paths: int
    n_defaults: int
    default_rate: float
    std_err: float
    tau: np.ndarray
    x_tau: np.ndarray
    x_tau_left: np.ndarray
    paths: list

    @property
    def survival_rate(self) -> float:
        return 1.0 - self.default_rate


def batch_simulate(model: LevyModel, T: float, n_paths: int, base_seed: int,
                   parallelism: int = 1, retain: int = 0) -> BatchResult:
    """Default-rate estimate over ``n_paths`` streams 0..n_paths-1.

    ``tau`` is +inf for surviving paths; ``x_tau``/``x_tau_left`` are the
    levels just after / just before the default jump (nan if none).
    ``retain`` keeps the first paths as SamplePath objects.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not T > 0:
        raise ValueError("horizon T must be > 0")

    def work(a, b):
        blk = simulate_block(model, T, base_seed, np.arange(a, b))
        idx = blk.default_index(model.u)
        rows = np.arange(b - a)
        d = idx >= 0
        j = np.maximum(idx, 0)
        tau = np.where(d, blk.times[rows, j], np.inf)
        xr = np.where(d, model.u + blk.S[rows, j], np.nan)
        xl = np.where(d, model.u + blk.left_S()[rows, j], np.nan)
        kept = [_row_to_path(model, T, blk, r, base_seed) for r in range(max(0, min(retain - a, b - a)))]
        return tau, xr, xl, kept

    parts = map_chunks(work, n_paths, parallelism)
    tau = np.concatenate([p[0] for p in parts])
    xr = np.concatenate([p[1] for p in parts])
    xl = np.concatenate([p[2] for p in parts])
    kept = [pth for p in parts for pth in p[3]]
    nd = int(np.count_nonzero(np.isfinite(tau)))
    p = nd / n_paths
    se = math.sqrt(p * (1 - p) / (n_paths - 1)) if n_paths > 1 else 0.0
    return BatchResult(n_paths, nd, p, se, tau, xr, xl, kept)


def exp_segment_intensity(lam: float, delta: float, x_start, length, mu: float):
    """Closed form of int_0^length lam * exp(-delta * (x_start + mu s)) ds."""
    a = delta * mu
    return lam * np.exp(-delta * x_start) * (-np.expm1(-a * length)) / a


def simpson_segment_intensity(model: LevyModel, x_start, length, panels: int = 64):
    """Composite Simpson rule for int_0^length tail_mass(x_start + mu s) ds."""
    x_start = np.asarray(x_start, dtype=float)
    length = np.asarray(length, dtype=float)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    s = np.linspace(0.0, 1.0, panels + 1)
    xs = x_start[..., None] + model.mu * length[..., None] * s
    vals = model.lam * model.jump_law.tail_prob(np.maximum(xs, 0.0))
    return (vals @ w) * length / (3.0 * panels)


def compensator_values(model: LevyModel, blk: JumpBlock, t: float, x0: Optional[float] = None) -> np.ndarray:
    """Per-row int_0^{t ^ tau} nu((-inf, -X_s]) ds, integrated exactly per segment."""
    x0 = model.u if x0 is None else x0
    n, k = blk.times.shape
    tau = blk.tau(x0)
    stop = np.minimum(tau, t)
    starts = np.concatenate([np.zeros((n, 1)), blk.times], axis=1)
    ends = np.concatenate([blk.times, np.full((n, 1), np.inf)], axis=1)
    lengths = np.clip(np.minimum(ends, stop[:, None]) - starts, 0.0, None)
    lengths = np.where(np.isfinite(starts), lengths, 0.0)
    s_start = np.concatenate([np.zeros((n, 1)), np.where(np.isfinite(blk.S), blk.S, 0.0)], axis=1)
    x_start = x0 + s_start
    live = lengths > 0
    x_start = np.where(live, x_start, 1.0)
    if model.is_exponential:
        seg = exp_segment_intensity(model.lam, model.jump_law.delta, x_start, lengths, model.mu)
    else:
        seg = simpson_segment_intensity(model, x_start, lengths)
    return np.sum(np.where(live, seg, 0.0), axis=1)


def write_paths_csv(path, paths: list) -> None:
    """Dump columns path_id, event_index, time, jump_size, x_left, x_right, is_default."""
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "event_index", "time", "jump_size", "x_left", "x_right", "is_default"])
        for pid, p in enumerate(paths):
            xr = p.jump_values
            c_prev = np.concatenate([[0.0], np.cumsum(p.jump_sizes)[:-1]]) if p.jump_sizes.size else []
            for j, (t, y) in enumerate(zip(p.jump_times, p.jump_sizes)):
                xl = p.u + (p.model.mu * t + c_prev[j])
                w.writerow([pid, j, repr(float(t)), repr(float(y)), repr(float(xl)),
                            repr(float(xr[j])), int(p.tau is not None and t == p.tau)])
