"""Monte-Carlo value surface f(t, x) = E[F(X_T) 1{tau > T} | X_t = x].

The process is time-homogeneous, so f(t, x) only depends on the remaining
time T - t.  One batch of paths is simulated from level 0 over [0, T]; for a
path with drift-plus-jumps part S and running minimum M (including S_0 = 0),
the path started from x survives to horizon s iff x + M(s) >= 0 and then pays
F(x + S(s)).  Every node (t_i, x_j) is therefore estimated from the same
paths (common random numbers in t and in x), which keeps the surface smooth
and monotone.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .levy_model import LevyModel
from .outputs import atomic_write_text
from .operators import DEFAULT_QUAD, _apply_A_many, jump_expectation
from .path_sim import map_chunks, simulate_block
from .quadrature import QuadSpec
from .surface_fn import GridSurface


class NonMartingaleError(ValueError):
    """Surface estimation requested for beta != 0 without acknowledgement."""


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff F with a serialisable description."""

    kind: str
    params: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, float(self.params[0]))
        if self.kind == "linear":
            a, b = self.params
            return a + b * x
        if self.kind == "call":
            (k,) = self.params
            return np.maximum(x - k, 0.0)
        raise ValueError(f"unknown payoff kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(float(p) for p in d.get("params", ())))


def bond_payoff() -> Payoff:
    """F = 1: the defaultable zero-coupon bond."""
    return Payoff("constant", (1.0,))


@dataclass(eq=False)
class ValueSurface:
    t_grid: np.ndarray
    x_grid: np.ndarray
    values: np.ndarray
    std_err: np.ndarray
    payoff: Payoff
    n_paths_per_node: int
    seed: int
    horizon: float
    model: Optional[LevyModel] = None
    meta: dict = field(default_factory=dict)

    def node(self, t: float, x: float) -> tuple[float, float]:
        i = int(np.flatnonzero(np.isclose(self.t_grid, t, rtol=0, atol=1e-14))[0])
        j = int(np.flatnonzero(np.isclose(self.x_grid, x, rtol=0, atol=1e-14))[0])
        return float(self.values[i, j]), float(self.std_err[i, j])


def default_x_max(model: LevyModel, T: float) -> float:
    return model.u + model.mu * T + 5.0 * math.sqrt(model.m2 * T)


def default_grids(model: LevyModel, T: float, t_nodes: int = 81, x_nodes: int = 81,
                  x_max: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grids on [0, T] x [0, x_max]; the initial level u is added as a node."""
    x_max = default_x_max(model, T) if x_max is None else float(x_max)
    if not (t_nodes >= 2 and x_nodes >= 2 and x_max > 0):
        raise ValueError("need at least 2 nodes per axis and x_max > 0")
    t_grid = np.linspace(0.0, T, t_nodes)
    x_grid = np.linspace(0.0, x_max, x_nodes)
    if 0 < model.u < x_max:
        x_grid = np.unique(np.concatenate([x_grid, [model.u]]))
    return t_grid, x_grid


def _check_grids(t_grid, x_grid, T):
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if t_grid.ndim != 1 or x_grid.ndim != 1 or t_grid.size < 2 or x_grid.size < 2:
        raise ValueError("grids must be 1-d with at least two nodes")
    if np.any(np.diff(t_grid) <= 0) or np.any(np.diff(x_grid) <= 0):
        raise ValueError("grids must be strictly increasing")
    if t_grid[0] != 0.0 or not math.isclose(t_grid[-1], T, rel_tol=0, abs_tol=1e-12):
        raise ValueError("t grid must run from 0 to T")
    if x_grid[0] != 0.0:
        raise ValueError("x grid must start at 0")
    t_grid = t_grid.copy()
    t_grid[-1] = T
    return t_grid, x_grid


def estimate_surface(model: LevyModel, F: Payoff, T: float, t_grid, x_grid, n_paths: int,
                     seed: int, parallelism: int = 1, nonmartingale_ack: bool = False) -> ValueSurface:
    """Estimate f on the tensor grid from ``n_paths`` common paths.

    The terminal row is set to F(x) exactly.  For beta != 0 the surface
    estimated here is the killed expectation, which solves A f = 0 rather
    than the hedging PIDE; it is refused unless ``nonmartingale_ack``.
    """
    if not model.is_martingale and not nonmartingale_ack:
        raise NonMartingaleError("beta != 0: the expectation surface is not the class of "
                                 "surfaces used for hedging; pass nonmartingale_ack=True")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    t_grid, x_grid = _check_grids(t_grid, x_grid, T)
    horizons = T - t_grid[:-1]

    def work(a, b):
        blk = simulate_block(model, T, seed, np.arange(a, b))
        counts = blk.counts_at(horizons)
        S = blk.S_at(horizons, counts)
        M = blk.running_min_at(horizons, counts)
        n_t, n_x = horizons.size, x_grid.size
        s1 = np.zeros((n_t, n_x))
        s2 = np.zeros((n_t, n_x))
        if F.kind in ("constant", "linear"):
            # F(x + S) = c(x) + b S: survivors at level x are a prefix of the
            # paths sorted by -M, so prefix sums of 1, S and S^2 suffice.
            a, b = (F.params[0], 0.0) if F.kind == "constant" else F.params
            for i in range(n_t):
                order = np.argsort(-M[:, i], kind="stable")
                depth = -M[order, i]
                s = S[order, i]
                k = np.searchsorted(depth, x_grid, side="right")
                c0 = np.concatenate([[0.0], np.cumsum(s)])[k] if b else 0.0
                c1 = np.concatenate([[0.0], np.cumsum(s * s)])[k] if b else 0.0
                cx = a + b * x_grid
                s1[i] = cx * k + b * c0
                s2[i] = cx * cx * k + 2.0 * b * cx * c0 + b * b * c1
            return s1, s2
        for j, x in enumerate(x_grid):
            v = np.where(x + M >= 0.0, F(x + S), 0.0)
            s1[:, j] = v.sum(axis=0)
            s2[:, j] = (v * v).sum(axis=0)
        return s1, s2

    parts = map_chunks(work, n_paths, parallelism)
    s1 = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    mean = s1 / n_paths
    var = np.maximum(s2 / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    values = np.vstack([mean, F(x_grid)[None, :]])
    se = np.vstack([np.sqrt(var / n_paths), np.zeros((1, x_grid.size))])
    meta = {"martingale": bool(model.is_martingale)}
    if not model.is_martingale:
        warnings.warn("surface estimated for beta != 0 solves A f = 0, not the hedging PIDE",
                      UserWarning, stacklevel=2)
    return ValueSurface(t_grid, x_grid, values, se, F, int(n_paths), int(seed), float(T),
                        model, meta)


def as_surface_fn(surface: ValueSurface) -> GridSurface:
    """Bilinear interpolant with finite-difference derivatives; 0 below x = 0."""
    return GridSurface(surface.t_grid, surface.x_grid, surface.values)


def gradient_matrix(grid: np.ndarray) -> np.ndarray:
    """Matrix D with D @ v equal to np.gradient(v, grid, edge_order=2)."""
    n = grid.size
    edge = 2 if n >= 3 else 1
    return np.gradient(np.eye(n), grid, axis=0, edge_order=edge)


@dataclass
class ResidualReport:
    residual: np.ndarray
    noise_bound: np.ndarray
    t_grid: np.ndarray
    x_grid: np.ndarray
    interior_pass_rate: float
    threshold: float

    def to_dict(self):
        return {"interior_pass_rate": self.interior_pass_rate, "threshold": self.threshold,
                "max_abs_residual": float(np.nanmax(np.abs(self.residual)))}


def pide_residual(surface: ValueSurface, model: LevyModel, quad: QuadSpec = DEFAULT_QUAD,
                  threshold: float = 5.0) -> ResidualReport:
    """A applied to the interpolated surface at every node with x > 0.

    Each node value carries Monte-Carlo error; A is linear in the node
    values, so |A error| <= sum of |weights| times node standard errors.
    The bound uses the finite-difference weight magnitudes for the local
    terms, the (non-negative) interpolation weights for the jump integral,
    and lambda times the node error for the f(x) terms; the quadrature's own
    error bound and ``quad.abs_tol`` are added so that nodes where every path
    survived (zero sample variance) are judged on numerical precision.
    Interior nodes
    (0 < t_i < T, 0 < x_j < x_max) pass when |residual| <= threshold * bound.
    """
    if not model.is_martingale:
        raise ValueError("pide_residual is defined for the martingale case")
    fn = as_surface_fn(surface)
    se_fn = GridSurface(surface.t_grid, surface.x_grid, surface.std_err)
    Dt = np.abs(gradient_matrix(surface.t_grid))
    Dx = np.abs(gradient_matrix(surface.x_grid))
    se = surface.std_err
    local_bound = Dt @ se + model.mu * (se @ Dx.T)
    n_t, n_x = se.shape
    res = np.full((n_t, n_x), np.nan)
    bound = np.full((n_t, n_x), np.nan)
    for i, t in enumerate(surface.t_grid):
        for j, x in enumerate(surface.x_grid):
            if x <= 0:
                continue
            val, qerr = _apply_A_many([fn], float(t), float(x), model, quad)
            res[i, j] = float(val[0])

            def h(y, t=t, x=x):
                return se_fn.value(float(t), x + y)[None, :]

            jb, _ = jump_expectation(h, float(x), model, quad, surface.x_grid - x)
            bound[i, j] = (local_bound[i, j] + jb[0] + model.lam * se[i, j]
                           + float(qerr[0]) + quad.abs_tol)
    interior = np.zeros_like(res, dtype=bool)
    interior[1:-1, 1:-1] = True
    ok = np.abs(res[interior]) <= threshold * bound[interior]
    return ResidualReport(res, bound, surface.t_grid, surface.x_grid,
                          float(np.mean(ok)), float(threshold))


@dataclass
class MartingaleCheck:
    times: np.ndarray
    means: np.ndarray
    std_errs: np.ndarray
    surface_se: np.ndarray
    max_z: float
    z_scores: np.ndarray
    passed: bool

    def to_dict(self):
        return {"times": self.times.tolist(), "means": self.means.tolist(),
                "std_errs": self.std_errs.tolist(), "max_z": self.max_z, "passed": self.passed}


def martingale_check(surface: ValueSurface, model: LevyModel, times, n_paths: int, seed: int,
                     parallelism: int = 1, n_se: float = 3.0) -> MartingaleCheck:
    """Is t -> mean of f(t, X_t) 1{tau > t} over fresh paths constant?

    Each time is compared with t = 0 through the paired per-path difference
    (its own standard error) plus the Monte-Carlo error of the surface at
    both ends, bounded by the mean interpolated node error.
    """
    fn = as_surface_fn(surface)
    se_fn = GridSurface(surface.t_grid, surface.x_grid, surface.std_err)
    times = np.asarray(times, dtype=float)
    T = surface.horizon
    u = model.u

    def work(a, b):
        blk = simulate_block(model, T, seed, np.arange(a, b))
        counts = blk.counts_at(times)
        X = u + blk.S_at(times, counts)
        alive = (u + blk.running_min_at(times, counts)) >= 0.0
        Z = np.empty_like(X)
        E = np.empty_like(X)
        for k, t in enumerate(times):
            Z[:, k] = np.where(alive[:, k], fn.value(float(t), X[:, k]), 0.0)
            E[:, k] = np.where(alive[:, k], se_fn.value(float(t), X[:, k]), 0.0)
        return Z.sum(0), (Z * Z).sum(0), Z.T @ Z, E.sum(0)

    parts = map_chunks(work, n_paths, parallelism)
    s1 = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    cross = np.sum([p[2] for p in parts], axis=0)
    esum = np.sum([p[3] for p in parts], axis=0)
    n = n_paths
    mean = s1 / n
    var = (s2 / n - mean**2) * n / (n - 1)
    se = np.sqrt(np.maximum(var, 0.0) / n)
    cov = (cross / n - np.outer(mean, mean)) * n / (n - 1)
    surf_se = esum / n
    ref = int(np.argmin(np.abs(times)))
    z = np.zeros(times.size)
    for k in range(times.size):
        if k == ref:
            continue
        dvar = (cov[k, k] + cov[ref, ref] - 2 * cov[k, ref]) / n
        comb = math.sqrt(max(dvar, 0.0) + surf_se[k] ** 2 + surf_se[ref] ** 2)
        z[k] = (mean[k] - mean[ref]) / comb if comb > 0 else (0.0 if mean[k] == mean[ref] else math.inf)
    max_z = float(np.max(np.abs(z)))
    return MartingaleCheck(times, mean, se, surf_se, max_z, z, bool(max_z <= n_se))


def save_surface(surface: ValueSurface, csv_path, json_path) -> None:
    """CSV with columns t, x, f_hat, std_err plus a JSON metadata sidecar."""
    lines = ["t,x,f_hat,std_err"]
    for i, t in enumerate(surface.t_grid):
        for j, x in enumerate(surface.x_grid):
            lines.append(f"{float(t)!r},{float(x)!r},{float(surface.values[i, j])!r},"
                         f"{float(surface.std_err[i, j])!r}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    meta = {
        "model": surface.model.to_dict() if surface.model is not None else None,
        "horizon": surface.horizon,
        "t_grid": [float(v) for v in surface.t_grid],
        "x_grid": [float(v) for v in surface.x_grid],
        "payoff": surface.payoff.to_dict(),
        "seed": surface.seed,
        "n_paths": surface.n_paths_per_node,
        **surface.meta,
    }
    atomic_write_text(json_path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_surface(csv_path, json_path, model: Optional[LevyModel] = None) -> ValueSurface:
    with open(json_path) as fh:
        meta = json.load(fh)
    t_grid = np.asarray(meta["t_grid"], dtype=float)
    x_grid = np.asarray(meta["x_grid"], dtype=float)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != t_grid.size * x_grid.size:
        raise ValueError("surface CSV does not match the grid in its metadata")
    values = data[:, 2].reshape(t_grid.size, x_grid.size)
    se = data[:, 3].reshape(t_grid.size, x_grid.size)
    extra = {k: v for k, v in meta.items()
             if k not in {"model", "horizon", "t_grid", "x_grid", "payoff", "seed", "n_paths"}}
    return ValueSurface(t_grid, x_grid, values, se, Payoff.from_dict(meta["payoff"]),
                        int(meta["n_paths"]), int(meta["seed"]), float(meta["horizon"]),
                        model, extra)
