"""Default-time distribution checks.

Survival probabilities come straight from exact path simulation.  Two
closed-form statements give independent oracles: the exponential harmonic
function of the killed process, and the compensator of the default
indicator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_model import ExponentialNegative, LevyModel
from .path_sim import batch_simulate, compensator_values, map_chunks, simulate_block

VACUOUS_TOL = 1e-12


@dataclass
class Estimate:
    value: float
    std_err: float
    n_paths: int

    def to_dict(self):
        return {"value": self.value, "std_err": self.std_err, "n_paths": self.n_paths}


def survival_probability(model: LevyModel, T: float, u: float, n_paths: int, seed: int,
                         parallelism: int = 1) -> Estimate:
    """P(tau > T | X_0 = u) from the same streams as batch_simulate."""
    if not T > 0:
        raise ValueError("T must be > 0")
    res = batch_simulate(model.with_initial(u), T, n_paths, seed, parallelism)
    return Estimate(res.survival_rate, res.std_err, n_paths)


def harmonic_exponential(model: LevyModel):
    """F(x) = 1 - (lambda / (mu delta)) exp((lambda / mu - delta) x).

    F(X_t) 1{tau > t} is a martingale for exponential negative jumps, for
    any lambda, mu and delta; it is identically zero when lambda = mu delta.
    """
    delta = _delta(model)
    c = model.lam / (model.mu * delta)
    k = model.lam / model.mu - delta

    def F(x):
        return 1.0 - c * np.exp(k * np.asarray(x, dtype=float))

    return F, c, k


def _delta(model: LevyModel) -> float:
    if not isinstance(model.jump_law, ExponentialNegative):
        raise TypeError("the exponential identity needs exponential negative jumps")
    return model.jump_law.delta


def identity_is_vacuous(model: LevyModel, tol: float = VACUOUS_TOL) -> bool:
    delta = _delta(model)
    return abs(model.lam - model.mu * delta) <= tol * max(model.lam, model.mu * delta)


@dataclass
class IdentityReport:
    t: float
    survival: float
    exp_moment: float
    lhs: float
    rhs: float
    discrepancy: float
    std_err: float
    vacuous: bool
    flagged: bool
    n_paths: int

    @property
    def status(self) -> str:
        if self.vacuous:
            return "identity vacuous"
        return "discrepancy" if self.flagged else "pass"

    def to_dict(self):
        return {"t": self.t, "lhs_terms": {"survival": self.survival, "scaled_exp_moment": self.exp_moment},
                "lhs": self.lhs, "rhs": self.rhs, "discrepancy": self.discrepancy,
                "std_err": self.std_err, "status": self.status, "n_paths": self.n_paths}


def martingale_identity_check(model: LevyModel, t: float, n_paths: int, seed: int,
                              parallelism: int = 1, n_se: float = 3.0) -> IdentityReport:
    """Monte-Carlo E[F(X_t) 1{tau > t}] against F(u) for the harmonic F.

    The left side is split as P(tau > t) minus the scaled exponential
    moment c E[exp(k X_t) 1{tau > t}].  In the martingale case F vanishes
    and the check is reported as vacuous instead of passing.
    """
    F, c, k = harmonic_exponential(model)
    vac = identity_is_vacuous(model)
    rhs = float(F(model.u))
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return IdentityReport(0.0, 1.0, 1.0 - rhs, rhs, rhs, 0.0, 0.0, vac, False, n_paths)
    u = model.u

    def work(a, b):
        blk = simulate_block(model, t, seed, np.arange(a, b))
        alive = ~np.isfinite(blk.tau(u))
        X = u + blk.S_at([t])[:, 0]
        e = np.where(alive, c * np.exp(k * X), 0.0)
        v = np.where(alive, F(X), 0.0)
        return alive.astype(float), e, v

    parts = map_chunks(work, n_paths, parallelism)
    alive = np.concatenate([p[0] for p in parts])
    e = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    lhs = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(n_paths))
    disc = lhs - rhs
    flagged = (not vac) and abs(disc) > n_se * se
    return IdentityReport(float(t), float(np.mean(alive)), float(np.mean(e)), lhs, rhs, disc,
                          se, vac, bool(flagged), n_paths)


@dataclass
class CompensatorReport:
    t: float
    default_rate: float
    default_se: float
    compensator_mean: float
    compensator_se: float
    diff_se: float
    z: float
    passed: bool
    n_paths: int

    def to_dict(self):
        return {k: getattr(self, k) for k in ("t", "default_rate", "default_se", "compensator_mean",
                                              "compensator_se", "diff_se", "z", "passed", "n_paths")}


def intensity_compensator_check(model: LevyModel, t: float, n_paths: int, seed: int,
                                parallelism: int = 1, n_se: float = 3.0) -> CompensatorReport:
    """E[1{tau <= t}] against E[int_0^{t ^ tau} nu((-inf, -X_s]) ds].

    The combined standard error is that of the per-path difference, which
    accounts for the strong positive correlation of the two sides.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return CompensatorReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, True, n_paths)

    def work(a, b):
        blk = simulate_block(model, t, seed, np.arange(a, b))
        d = np.isfinite(blk.tau(model.u)).astype(float)
        lam_int = compensator_values(model, blk, t)
        return d, lam_int

    parts = map_chunks(work, n_paths, parallelism)
    d = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    n = n_paths
    sd = lambda a: float(np.std(a, ddof=1) / math.sqrt(n))
    diff_se = sd(d - c)
    diff = float(np.mean(d) - np.mean(c))
    z = diff / diff_se if diff_se > 0 else (0.0 if diff == 0 else math.inf)
    return CompensatorReport(float(t), float(np.mean(d)), sd(d), float(np.mean(c)), sd(c), diff_se,
                             z, bool(abs(z) <= n_se), n)
