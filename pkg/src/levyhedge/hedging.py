"""Discretely rebalanced locally risk-minimizing hedge of F(X_T) 1{tau > T}.

On trading dates 0 = t_0 < ... < t_N = T the position theta_k is fixed at
t_k from X(t_k) and held over (t_k, t_{k+1}].  With V_k the surface value
f(t_k, X_{t_k}) 1{tau > t_k} and I_k = sum_{j<k} theta_j (X_{t_{j+1}} - X_{t_j})
the bookkeeping is

    C_k = V_k - I_k        (cumulative cost, C_0 = V_0)
    L_k = C_k - C_0        (hedging error)
    eta_k = V_k - theta_k X_{t_k}   (risk-free holding)

Each quantity is computed once from the previous ones, so the accounting
identities hold bit-for-bit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .levy_model import ExponentialNegative, LevyModel
from .operators import DEFAULT_QUAD, ExpThetaTable, apply_L, theta_exponential, theta_general
from .outputs import atomic_open
from .path_sim import SamplePath, map_chunks, simulate_block
from .quadrature import QuadSpec
from .surface_fn import GridSurface, SurfaceFn
from .value_surface import ValueSurface, as_surface_fn

HEDGE_CHUNK = 1024


class SurfaceMismatchError(ValueError):
    """The surface does not belong to the claim or horizon being hedged."""


@dataclass(eq=False)
class HedgeRecord:
    trading_dates: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    V: np.ndarray
    stoch_int: np.ndarray
    L: np.ndarray
    C: np.ndarray
    payoff: float
    tau: Optional[float] = None

    def accounting_residuals(self) -> dict:
        """Exact-zero checks of the three bookkeeping identities."""
        return {
            "value": float(np.max(np.abs((self.V - self.theta * self.x) - self.eta))),
            "cost": float(np.max(np.abs((self.C - self.C[0]) - self.L))),
            "decomposition": float(abs(((self.V[-1] - self.stoch_int[-1]) - self.V[0]) - self.L[-1])),
        }


def uniform_dates(T: float, n_steps: int) -> np.ndarray:
    if n_steps < 1:
        raise ValueError("need at least one trading interval")
    d = np.arange(n_steps + 1) * (T / n_steps)
    d[-1] = T
    return d


def _check_dates(dates, T):
    dates = np.asarray(dates, dtype=float)
    if dates.ndim != 1 or dates.size < 2 or dates[0] != 0.0 or dates[-1] != T:
        raise ValueError("trading dates must start at 0 and end at T")
    if np.any(np.diff(dates) <= 0):
        raise ValueError("trading dates must be strictly increasing")
    return dates


def _surface_fn(surface) -> SurfaceFn:
    return as_surface_fn(surface) if isinstance(surface, ValueSurface) else surface


def theta_evaluator(surface, model: LevyModel, quad: QuadSpec = DEFAULT_QUAD):
    """Callable (t, x array) -> theta array, without the default indicator."""
    fn = _surface_fn(surface)
    exp_law = isinstance(model.jump_law, ExponentialNegative)
    if exp_law and isinstance(fn, GridSurface):
        return ExpThetaTable(fn, model)
    scalar = theta_exponential if exp_law else theta_general

    def evaluate(t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([scalar(fn, float(t), float(v), model, quad) if v > 0 else 0.0 for v in x])

    return evaluate


def hedge_arrays(fn: SurfaceFn, theta_at, dates: np.ndarray, X: np.ndarray, tau: np.ndarray,
                 payoff) -> dict:
    """Core bookkeeping on a block of paths.

    X has shape (n, N+1) with the levels at the trading dates and tau the
    default times (+inf when none).  Returns theta, eta, V, I, L, C of the
    same shape and the realised payoff per path.
    """
    n, m = X.shape
    alive = tau[:, None] > dates[None, :]
    theta = np.zeros((n, m))
    V = np.zeros((n, m))
    for k, t in enumerate(dates):
        live = alive[:, k]
        if np.any(live):
            theta[live, k] = theta_at(float(t), X[live, k])
            V[live, k] = fn.value(float(t), X[live, k])
    dX = np.diff(X, axis=1)
    I = np.zeros((n, m))
    I[:, 1:] = np.cumsum(theta[:, :-1] * dX, axis=1)
    C = V - I
    L = C - C[:, :1]
    eta = V - theta * X
    pay = np.where(alive[:, -1], payoff(X[:, -1]), 0.0)
    return {"theta": theta, "eta": eta, "V": V, "I": I, "L": L, "C": C, "payoff": pay}


def _check_surface(surface, payoff, T):
    if isinstance(surface, ValueSurface):
        if not math.isclose(surface.horizon, T, rel_tol=0, abs_tol=1e-12):
            raise SurfaceMismatchError(f"surface horizon {surface.horizon} != {T}")
        if payoff is not None and not np.array_equal(surface.values[-1], payoff(surface.x_grid)):
            raise SurfaceMismatchError("surface terminal row does not equal the payoff")


def build_strategy(surface, model: LevyModel, path: SamplePath, trading_dates,
                   quad: QuadSpec = DEFAULT_QUAD, payoff=None, theta_at=None) -> HedgeRecord:
    """Hedge one path on the given trading dates.

    ``surface`` is a ValueSurface or any SurfaceFn; ``payoff`` defaults to
    the surface's own payoff.  theta_k uses X(t_k) and is zero once
    tau <= t_k.
    """
    if payoff is None:
        payoff = getattr(surface, "payoff", None)
    if payoff is None:
        raise SurfaceMismatchError("no payoff given and the surface does not carry one")
    _check_surface(surface, payoff, path.horizon)
    dates = _check_dates(trading_dates, path.horizon)
    fn = _surface_fn(surface)
    theta_at = theta_evaluator(fn, model, quad) if theta_at is None else theta_at
    # levels at the dates with the same arithmetic as the batch engine
    k = np.searchsorted(path.jump_times, dates, side="right")
    C = np.concatenate([[0.0], np.cumsum(path.jump_sizes)])
    X = (path.u + (path.model.mu * dates + C[k]))[None, :]
    tau = np.array([np.inf if path.tau is None else path.tau])
    out = hedge_arrays(fn, theta_at, dates, X, tau, payoff)
    return HedgeRecord(dates, X[0], out["theta"][0], out["eta"][0], out["V"][0], out["I"][0],
                       out["L"][0], out["C"][0], float(out["payoff"][0]), path.tau)


@dataclass
class HedgeStats:
    n_paths: int
    n_steps: int
    mean_L: float
    mean_L_se: float
    var_L: float
    var_L_se: float
    corr: float
    corr_se: float
    n_live_intervals: int
    max_accounting_residual: float
    v0: float
    extra: dict = field(default_factory=dict)

    @property
    def mean_L_z(self) -> float:
        return self.mean_L / self.mean_L_se if self.mean_L_se > 0 else (0.0 if self.mean_L == 0 else math.inf)

    @property
    def corr_z(self) -> float:
        return self.corr / self.corr_se if self.corr_se > 0 else (0.0 if self.corr == 0 else math.inf)

    def to_dict(self) -> dict:
        return {"n_paths": self.n_paths, "n_steps": self.n_steps, "mean_L": self.mean_L,
                "mean_L_se": self.mean_L_se, "var_L": self.var_L, "var_L_se": self.var_L_se,
                "corr_dL_dX": self.corr, "corr_se": self.corr_se,
                "n_live_intervals": self.n_live_intervals,
                "max_accounting_residual": self.max_accounting_residual, "V0": self.v0}


def _block_levels(model, blk, dates):
    counts = blk.counts_at(dates)
    return model.u + blk.S_at(dates, counts)


def hedge_error_stats(model: LevyModel, surface: ValueSurface, n_paths: int, trading_dates,
                      seed: int, parallelism: int = 1, quad: QuadSpec = DEFAULT_QUAD,
                      keep_paths: int = 0, theta_at=None) -> HedgeStats:
    """Monte-Carlo statistics of the hedging error over fresh paths.

    E[L_T] carries the path standard error combined with the surface's
    standard error at (0, u), since V_0 is itself an estimate.  The
    orthogonality diagnostic is the pooled uncentred correlation of
    (Delta L_k, Delta X_k) over intervals that start before default, with a
    delta-method standard error clustered by path.  ``theta_at`` replaces
    the hedge ratio (used to study mis-specified hedges).
    """
    if not model.is_martingale:
        raise ValueError("hedge_error_stats needs the martingale case")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    T = surface.horizon
    dates = _check_dates(trading_dates, T)
    fn = as_surface_fn(surface)
    theta_at = theta_evaluator(fn, model, quad) if theta_at is None else theta_at
    F = surface.payoff

    def work(a, b):
        blk = simulate_block(model, T, seed, np.arange(a, b))
        X = _block_levels(model, blk, dates)
        tau = blk.tau(model.u)
        out = hedge_arrays(fn, theta_at, dates, X, tau, F)
        dL = np.diff(out["L"], axis=1)
        dX = np.diff(X, axis=1)
        live = tau[:, None] > dates[None, :-1]
        dL = np.where(live, dL, 0.0)
        dXl = np.where(live, dX, 0.0)
        acc = np.max(np.abs((out["V"] - out["theta"] * X) - out["eta"]), initial=0.0)
        acc = max(acc, np.max(np.abs((out["C"] - out["C"][:, :1]) - out["L"]), initial=0.0))
        dec = ((out["V"][:, -1] - out["I"][:, -1]) - out["V"][:, 0]) - out["L"][:, -1]
        acc = max(acc, float(np.max(np.abs(dec), initial=0.0)))
        kept = None
        if keep_paths > a:
            r = min(keep_paths, b) - a
            kept = (X[:r], {k: v[:r] for k, v in out.items()})
        return (out["L"][:, -1], (dL * dXl).sum(1), (dL * dL).sum(1), (dXl * dXl).sum(1),
                live.sum(), acc, out["V"][0, 0], kept)

    parts = map_chunks(work, n_paths, parallelism, chunk=HEDGE_CHUNK)
    LT = np.concatenate([p[0] for p in parts])
    a = np.concatenate([p[1] for p in parts])
    b = np.concatenate([p[2] for p in parts])
    c = np.concatenate([p[3] for p in parts])
    n_live = int(sum(int(p[4]) for p in parts))
    acc = max(float(p[5]) for p in parts)
    v0 = float(parts[0][6])
    n = n_paths
    mean_L = float(np.mean(LT))
    j0 = int(np.argmin(np.abs(surface.x_grid - model.u)))
    se_v0 = float(surface.std_err[0, j0]) if surface.x_grid[j0] == model.u else 0.0
    sd = float(np.std(LT, ddof=1))
    mean_se = math.sqrt(sd**2 / n + se_v0**2)
    var_L = sd**2
    m4 = float(np.mean((LT - mean_L) ** 4))
    var_se = math.sqrt(max(m4 - var_L**2 * (n - 3) / (n - 1), 0.0) / n)
    ma, mb, mc = float(np.mean(a)), float(np.mean(b)), float(np.mean(c))
    if mb > 0 and mc > 0:
        corr = ma / math.sqrt(mb * mc)
        g = np.array([1.0 / math.sqrt(mb * mc), -corr / (2 * mb), -corr / (2 * mc)])
        cov = np.cov(np.vstack([a, b, c]))
        corr_se = math.sqrt(max(float(g @ cov @ g), 0.0) / n)
    else:
        corr, corr_se = 0.0, 0.0
    extra = {}
    if keep_paths:
        extra["paths"] = [p[7] for p in parts if p[7] is not None]
    return HedgeStats(n, dates.size - 1, mean_L, mean_se, var_L, var_se, corr, corr_se,
                      n_live, acc, v0, extra)


@dataclass
class RiskFreeReport:
    sup_norm: float
    rms: float
    tolerance: float
    risk_free: bool
    residual: list

    def verdict(self, tolerance: float) -> bool:
        return self.sup_norm < tolerance

    def to_dict(self) -> dict:
        return {"sup_norm": self.sup_norm, "rms": self.rms, "tolerance": self.tolerance,
                "risk_free": self.risk_free}


def risk_free_check(surface, model: LevyModel, quad: QuadSpec = DEFAULT_QUAD,
                    grid=None, tolerance: float = 1e-8) -> RiskFreeReport:
    """Sup and RMS of the residual-risk density over a grid of (t, x > 0).

    ``grid`` is a pair (t_points, x_points); by default the surface's own
    nodes.  The claim is declared risk-free iff sup < tolerance.
    """
    fn = _surface_fn(surface)
    if grid is None:
        t_pts, x_pts = surface.t_grid, surface.x_grid
    else:
        t_pts, x_pts = grid
    rows = []
    for t in np.asarray(t_pts, dtype=float):
        for x in np.asarray(x_pts, dtype=float):
            if x > 0:
                rows.append((float(t), float(x), apply_L(fn, float(t), float(x), model, quad)))
    vals = np.array([r[2] for r in rows])
    sup = float(np.max(np.abs(vals))) if vals.size else 0.0
    rms = float(np.sqrt(np.mean(vals**2))) if vals.size else 0.0
    return RiskFreeReport(sup, rms, float(tolerance), sup < tolerance, rows)


def write_hedge_csv(path, records) -> None:
    """Columns path_id, date, x, theta, eta, V, L, C; one row per trading date."""
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "date", "x", "theta", "eta", "V", "L", "C"])
        for pid, rec in enumerate(records):
            for k in range(rec.trading_dates.size):
                w.writerow([pid] + [repr(float(v[k])) for v in
                                    (rec.trading_dates, rec.x, rec.theta, rec.eta, rec.V, rec.L, rec.C)])
