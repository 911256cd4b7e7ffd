"""Firm-value model: positive drift plus compound Poisson jumps.

    X_t = u + mu * t + sum_{i <= N_t} Y_i,    N ~ Poisson(lambda)

The Levy measure is nu(dy) = lambda * P(Y in dy).  Only finite-activity laws
are supported, which keeps path simulation exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

TOL_BETA = 1e-12


class ModelError(ValueError):
    """Raised when a model violates the standing hypotheses."""


class NonConformingLawWarning(UserWarning):
    pass


class JumpLaw:
    """Law of a single jump size Y.

    Subclasses provide moments, the CDF, inverse-CDF sampling from uniforms
    and a finite interval that carries all but ``eps`` of the mass.
    """

    kind: str = ""
    atomic = False

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    def cdf(self, y):
        raise NotImplementedError

    def pdf(self, y):
        raise NotImplementedError

    def tail_prob(self, x):
        """P(Y <= -x)."""
        return self.cdf(-np.asarray(x, dtype=float))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cut(self, eps: float) -> tuple[float, float]:
        """Interval [lo, hi] with P(Y < lo) <= eps and P(Y > hi) <= eps."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialNegative(JumpLaw):
    """-Y ~ Exponential(delta): density delta * exp(delta * y) on y < 0."""

    delta: float
    kind = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ModelError(f"exponential rate delta must be > 0, got {self.delta}")

    @property
    def mean(self) -> float:
        return -1.0 / self.delta

    @property
    def second_moment(self) -> float:
        return 2.0 / self.delta**2

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, np.exp(self.delta * np.minimum(y, 0.0)), 1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, self.delta * np.exp(self.delta * np.minimum(y, 0.0)), 0.0)

    def from_uniform(self, u):
        return np.log(u) / self.delta

    def cut(self, eps):
        return math.log(eps) / self.delta, 0.0

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta}


@dataclass(frozen=True, eq=False)
class Empirical(JumpLaw):
    """Resampling law on a finite sample.  Atomic, hence non-conforming."""

    samples: np.ndarray
    kind = "empirical"
    atomic = True

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if s.size == 0 or not np.all(np.isfinite(s)):
            raise ModelError("empirical jump law needs a non-empty finite sample")
        object.__setattr__(self, "samples", s)

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def second_moment(self):
        return float(np.mean(self.samples**2))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.searchsorted(self.samples, y, side="right") / self.samples.size

    def pdf(self, y):
        raise TypeError("empirical law has no density")

    def from_uniform(self, u):
        idx = np.minimum((u * self.samples.size).astype(np.int64), self.samples.size - 1)
        return self.samples[idx]

    def cut(self, eps):
        return float(self.samples[0]), float(self.samples[-1])

    def to_dict(self):
        return {"kind": self.kind, "samples": self.samples.tolist()}


@dataclass(frozen=True, eq=False)
class UserDensity(JumpLaw):
    """Density callback on a finite support [lower, upper].

    Moments use adaptive quadrature; the CDF and the inverse CDF used for
    sampling come from a 2**14-panel cumulative Simpson table.
    """

    density: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    name: str = "user"
    kind = "density"
    _table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ModelError("density support must be a finite interval lower < upper")
        grid = np.linspace(self.lower, self.upper, 2**14 + 1)
        vals = np.asarray(self.density(grid), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ModelError("density must be finite and non-negative on its support")
        mass = self._quad(lambda y: self.density(y))
        if abs(mass - 1.0) > 1e-6:
            raise ModelError(f"density integrates to {mass}, expected 1")
        cum = integrate.cumulative_simpson(vals, x=grid, initial=0.0)
        cum = np.maximum.accumulate(cum / cum[-1])
        object.__setattr__(self, "_table", (grid, cum))

    def _quad(self, g) -> float:
        return integrate.quad(lambda y: float(np.asarray(g(np.array([y])))[0]),
                              self.lower, self.upper, limit=200, epsabs=1e-14, epsrel=1e-12)[0]

    @property
    def mean(self):
        return self._quad(lambda y: y * self.density(y))

    @property
    def second_moment(self):
        return self._quad(lambda y: y * y * self.density(y))

    def cdf(self, y):
        grid, cum = self._table
        return np.interp(np.asarray(y, dtype=float), grid, cum, left=0.0, right=1.0)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= self.lower) & (y <= self.upper)
        out = np.zeros_like(y)
        if np.any(inside):
            out[inside] = np.asarray(self.density(y[inside]), dtype=float)
        return out

    def from_uniform(self, u):
        grid, cum = self._table
        return np.interp(u, cum, grid)

    def cut(self, eps):
        return self.lower, self.upper

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True, eq=False)
class UniformDensity(UserDensity):
    kind = "uniform"

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower, "upper": self.upper}


def uniform_law(lower: float, upper: float) -> UserDensity:
    width = upper - lower
    return UniformDensity(lambda y: np.full(np.shape(y), 1.0 / width), lower, upper,
                          name=f"uniform[{lower},{upper}]")


@dataclass(frozen=True, eq=False)
class LevyModel:
    u: float
    mu: float
    lam: float
    jump_law: JumpLaw
    beta: float
    m2: float
    is_martingale: bool
    non_conforming: bool = False

    def with_initial(self, u: float) -> "LevyModel":
        return build_model(u, self.mu, self.lam, self.jump_law,
                           allow_nonconforming=self.non_conforming)

    @property
    def is_exponential(self) -> bool:
        return isinstance(self.jump_law, ExponentialNegative)

    def to_dict(self) -> dict:
        return {"u": self.u, "mu": self.mu, "lambda": self.lam,
                "jump_law": self.jump_law.to_dict(), "beta": self.beta, "m2": self.m2}


def build_model(u: float, mu: float, lam: float, jump_law: JumpLaw,
                allow_nonconforming: bool = False) -> LevyModel:
    """Validate parameters and attach the derived drift ``beta`` and ``m2``.

    Atomic (empirical) jump laws are refused unless ``allow_nonconforming``
    is set, in which case the model is flagged and a warning is issued.
    """
    for name, val in (("u", u), ("mu", mu), ("lambda", lam)):
        if not math.isfinite(val):
            raise ModelError(f"{name} must be finite, got {val}")
    if u <= 0:
        raise ModelError(f"initial value u must be > 0, got {u}")
    if mu <= 0:
        raise ModelError(f"drift mu must be > 0, got {mu}")
    if lam < 0:
        raise ModelError(f"jump intensity lambda must be >= 0, got {lam}")
    if not isinstance(jump_law, JumpLaw):
        raise ModelError("jump_law must be a JumpLaw")
    if jump_law.atomic and not allow_nonconforming:
        raise ModelError("atomic jump laws violate the continuity hypothesis; "
                         "pass allow_nonconforming=True to use one anyway")
    ey, ey2 = jump_law.mean, jump_law.second_moment
    if not (math.isfinite(ey) and math.isfinite(ey2)) or ey2 <= 0:
        raise ModelError("jump law needs finite, strictly positive second moment")
    m2 = lam * ey2
    if not (0 < m2 < math.inf):
        raise ModelError(f"need 0 < lambda * E[Y^2] < inf, got {m2}")
    beta_val = mu + lam * ey
    scale = max(abs(mu), abs(lam * ey))
    is_mart = abs(beta_val) <= TOL_BETA * scale
    if jump_law.atomic:
        warnings.warn("empirical jump law is atomic; model flagged non_conforming",
                      NonConformingLawWarning, stacklevel=2)
    return LevyModel(float(u), float(mu), float(lam), jump_law, float(beta_val), float(m2),
                     bool(is_mart), bool(jump_law.atomic))


def beta(model: LevyModel) -> float:
    return model.beta


def second_moment(model: LevyModel) -> float:
    return model.m2


def tail_mass(model: LevyModel, x):
    """nu((-inf, -x]) = lambda * P(Y <= -x), the default intensity at level x."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("tail_mass is defined for x >= 0")
    out = model.lam * model.jump_law.tail_prob(xa)
    return float(out) if np.ndim(out) == 0 else out


def martingale_model(u: float, mu: float, delta: float) -> LevyModel:
    """Exponential-jump model with lambda = mu * delta, i.e. beta = 0."""
    return build_model(u, mu, mu * delta, ExponentialNegative(delta))


def benchmark_model() -> LevyModel:
    """u = 0.01, mu = 0.1, delta = 100, lambda = 10."""
    return build_model(0.01, 0.1, 10.0, ExponentialNegative(100.0))


def law_from_dict(spec: dict, density: Optional[Callable] = None) -> JumpLaw:
    kind = spec["kind"]
    if kind == "exponential":
        return ExponentialNegative(float(spec["delta"]))
    if kind == "empirical":
        return Empirical(np.asarray(spec["samples"], dtype=float))
    if kind == "uniform":
        return uniform_law(float(spec["lower"]), float(spec["upper"]))
    if kind == "density" and density is not None:
        return UserDensity(density, float(spec["lower"]), float(spec["upper"]))
    raise ModelError(f"unknown jump law kind {kind!r}")
