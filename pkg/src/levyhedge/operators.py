"""Integro-differential operators acting on surfaces f(t, x).

For a surface f and level x > 0 the generator with killing below zero is

    A f = f_t + mu f_x + int_{y > -x} (f(x+y) - f(x)) nu(dy) - f(x) nu((-inf, -x])

which is the same quantity as f_t + mu f_x - int_{y <= -x} f(x+y) nu(dy)
+ int (f(x+y) - f(x)) nu(dy): the values of f on the killed region cancel.
Writing it this way keeps the killing term exact (it is a closed-form tail
mass) and makes the jump integral vanish identically on constant surfaces.

From A we build

    K f = A(x f) - x A f - beta f               (jump covariance with X)
    L f = A(f^2) - 2 f A f - (K f)^2 / m2       (residual risk density)
    theta = K f / m2                             (hedge ratio)
"""
from __future__ import annotations

import csv
import math
import warnings
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammainc

from .levy_model import TOL_BETA, ExponentialNegative, LevyModel
from .quadrature import QuadratureError, QuadSpec, gk_integrate
from .surface_fn import SurfaceFn

DEFAULT_QUAD = QuadSpec()


class ThetaDivergenceWarning(UserWarning):
    """K f / m2 and A f / beta disagree: the surface does not solve the PIDE."""


def _check_x(x: float):
    if not x > 0:
        raise ValueError(f"operators are posed for x > 0, got x={x}")


def jump_expectation(h, x: float, model: LevyModel, quad: QuadSpec = DEFAULT_QUAD,
                     knots: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """int_{y > -x} h(y) nu(dy) for a vector-valued ``h`` (shape (k, m) on m points).

    Density laws are integrated over (-x, hi], hi being the point above which
    only ``quad.tail_cut`` of the mass remains; the domain is bounded below
    by the killing boundary, so no lower truncation is needed (the lower cut
    point is kept as a breakpoint).  Above hi, h is frozen at h(hi) and
    weighted by the exact remaining mass.  Breakpoints are added at
    ``knots`` (in y coordinates).  Empirical laws are summed exactly.
    Returns (estimate, error bound).
    """
    law = model.jump_law
    lam = model.lam
    if law.atomic:
        s = law.samples[law.samples > -x]
        if s.size == 0:
            k = np.atleast_2d(h(np.array([0.0]))).shape[0]
            return np.zeros(k), np.zeros(k)
        vals = np.atleast_2d(h(s))
        return lam * vals.sum(axis=1) / law.samples.size, np.zeros(vals.shape[0])
    lo, hi = law.cut(quad.tail_cut)
    a = -x
    if a >= hi:
        k = np.atleast_2d(h(np.array([hi]))).shape[0]
        est, err = np.zeros(k), np.zeros(k)
    else:
        ks = np.concatenate([np.asarray(knots, dtype=float), [lo, 0.0]])
        ks = ks[(ks > a) & (ks < hi)]
        pts = np.concatenate([[a, hi], ks])

        def integrand(y):
            return np.atleast_2d(h(y)) * (lam * law.pdf(y))

        est, err = gk_integrate(integrand, pts, quad.abs_tol, quad.rel_tol,
                                max_panels=quad.panels * max(1, pts.size))
        est = est.copy()
    m_hi = lam * (1.0 - float(law.cdf(max(hi, a))))
    if m_hi > 0:
        est += m_hi * np.atleast_2d(h(np.array([max(hi, a)])))[:, 0]
    return est, err


def _apply_A_many(surfaces: Sequence[SurfaceFn], t: float, x: float, model: LevyModel,
                  quad: QuadSpec):
    """A applied to several surfaces at one point, sharing one quadrature pass."""
    _check_x(x)
    xa = np.array([x])
    fx = np.array([float(s.value(t, xa)[0]) for s in surfaces])
    local = np.array([float(s.dt(t, xa)[0]) + model.mu * float(s.dx(t, xa)[0])
                      for s in surfaces])
    knots = np.unique(np.concatenate([s.knots for s in surfaces])) - x

    def h(y):
        z = x + y
        return np.stack([s.value(t, z) for s in surfaces]) - fx[:, None]

    jump, err = jump_expectation(h, x, model, quad, knots)
    kill = fx * model.lam * float(model.jump_law.tail_prob(x))
    return local + jump - kill, err


def apply_A(f: SurfaceFn, t: float, x: float, model: LevyModel,
            quad: QuadSpec = DEFAULT_QUAD) -> float:
    """Generator with killing below zero, evaluated at (t, x), x > 0."""
    val, _ = _apply_A_many([f], t, x, model, quad)
    return float(val[0])


def apply_A_with_error(f: SurfaceFn, t: float, x: float, model: LevyModel,
                       quad: QuadSpec = DEFAULT_QUAD) -> tuple[float, float]:
    val, err = _apply_A_many([f], t, x, model, quad)
    return float(val[0]), float(err[0])


def apply_K_op(f: SurfaceFn, t: float, x: float, model: LevyModel,
               quad: QuadSpec = DEFAULT_QUAD) -> float:
    """K f = A(x f) - x A f - beta f."""
    (aK, af), _ = _apply_A_many([f.times_x(), f], t, x, model, quad)
    fx = float(f.value(t, np.array([x]))[0])
    return float(aK - x * af - model.beta * fx)


def apply_L(f: SurfaceFn, t: float, x: float, model: LevyModel,
            quad: QuadSpec = DEFAULT_QUAD) -> float:
    """Residual risk density A(f^2) - 2 f A f - (K f)^2 / m2.

    Equal to int (f(x+y) 1{x+y >= 0} - f(x))^2 nu(dy) - (K f)^2 / m2, which is
    non-negative by Cauchy-Schwarz; it vanishes iff the claim is hedgeable.
    """
    ops = _apply_A_many([f.squared(), f.times_x(), f], t, x, model, quad)[0]
    a_sq, a_k, a_f = ops
    fx = float(f.value(t, np.array([x]))[0])
    k = a_k - x * a_f - model.beta * fx
    return float(a_sq - 2.0 * fx * a_f - k * k / model.m2)


def operator_values(f: SurfaceFn, t: float, x: float, model: LevyModel,
                    quad: QuadSpec = DEFAULT_QUAD) -> dict:
    """A f, K f, L f and theta at one point from a single quadrature pass."""
    a_sq, a_k, a_f = _apply_A_many([f.squared(), f.times_x(), f], t, x, model, quad)[0]
    fx = float(f.value(t, np.array([x]))[0])
    k = a_k - x * a_f - model.beta * fx
    return {"A_f": float(a_f), "K_f": float(k),
            "L_f": float(a_sq - 2.0 * fx * a_f - k * k / model.m2),
            "theta": float(k / model.m2)}


def theta_general(f: SurfaceFn, t: float, x_left: float, model: LevyModel,
                  quad: QuadSpec = DEFAULT_QUAD, defaulted: bool = False) -> float:
    """Hedge ratio K f(t, x_left) / m2, zero once default has happened.

    For beta != 0 the value is compared with A f / beta, the equivalent form
    for surfaces solving the PIDE; a disagreement beyond ``quad.rel_tol``
    raises a ThetaDivergenceWarning.
    """
    if defaulted:
        return 0.0
    (aK, af), _ = _apply_A_many([f.times_x(), f], t, x_left, model, quad)
    fx = float(f.value(t, np.array([x_left]))[0])
    k = aK - x_left * af - model.beta * fx
    theta = float(k / model.m2)
    scale = max(abs(model.mu), abs(model.lam * model.jump_law.mean))
    if abs(model.beta) > TOL_BETA * scale:
        alt = float(af / model.beta)
        if abs(alt - theta) > quad.rel_tol * max(abs(theta), abs(alt), quad.abs_tol):
            warnings.warn(f"K f/m2 = {theta!r} but A f/beta = {alt!r} at (t={t}, x={x_left})",
                          ThetaDivergenceWarning, stacklevel=2)
    return theta


def exp_moments(delta: float, length) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """E_k(L) = int_0^L r^k exp(-delta r) dr for k = 0, 1, 2."""
    a = delta * np.asarray(length, dtype=float)
    e0 = gammainc(1, a) / delta
    e1 = gammainc(2, a) / delta**2
    e2 = 2.0 * gammainc(3, a) / delta**3
    return e0, e1, e2


def _require_exponential(model: LevyModel) -> float:
    if not isinstance(model.jump_law, ExponentialNegative):
        raise TypeError("theta_exponential needs exponential negative jumps")
    return model.jump_law.delta


def _weighted_gap_linear(z: np.ndarray, g: np.ndarray, x: float, delta: float) -> float:
    """int_0^x r (g(x) - g(x - r)) exp(-delta r) dr for piecewise-linear g.

    g is given by knots ``z`` and values, extended as a constant past the
    last knot.  Each linear piece is integrated in closed form.
    """
    inner = z[(z > 0.0) & (z < x)]
    r = np.unique(np.concatenate([[0.0, x], x - inner]))
    gx = float(np.interp(x, z, g))
    d = gx - np.interp(x - r, z, g)
    ra, L = r[:-1], np.diff(r)
    da = d[:-1]
    s = np.diff(d) / L
    e0, e1, e2 = exp_moments(delta, L)
    seg = np.exp(-delta * ra) * (ra * da * e0 + (da + ra * s) * e1 + s * e2)
    return float(math.fsum(seg))


def theta_exponential(f: SurfaceFn, t: float, x_left: float, model: LevyModel,
                      quad: QuadSpec = DEFAULT_QUAD, defaulted: bool = False) -> float:
    """Hedge ratio for exponential negative jumps with rate delta.

    theta = (delta^2 int_{-x}^0 y f(t, x+y) dF_Y(y) + delta f(t, x)) / 2, the
    factor 1/2 being m2 = 2 lambda / delta^2.  The bracket is evaluated as
    delta [f(x) e^{-delta x}(1 + delta x) + delta^2 int_0^x r (f(x) - f(x-r)) e^{-delta r} dr],
    which only involves differences of f; the integral is exact for
    piecewise-linear rows and adaptive quadrature otherwise.
    """
    delta = _require_exponential(model)
    if defaulted:
        return 0.0
    _check_x(x_left)
    x = float(x_left)
    row = f.linear_row(t)
    gx = float(f.value(t, np.array([x]))[0])
    if row is not None:
        gap = _weighted_gap_linear(np.asarray(row[0], float), np.asarray(row[1], float), x, delta)
    else:
        ks = x - np.asarray(f.knots, dtype=float)
        ks = ks[(ks > 0) & (ks < x)]

        def integrand(r):
            return (r * (gx - f.value(t, x - r)) * np.exp(-delta * r))[None, :]

        est, _ = gk_integrate(integrand, np.concatenate([[0.0, x], ks]),
                              quad.abs_tol / delta**2, quad.rel_tol, quad.panels)
        gap = float(est[0])
    ex = math.exp(-delta * x)
    return 0.5 * delta * (gx * ex * (1.0 + delta * x) + delta**2 * gap)


class ExpThetaTable:
    """Vectorised theta_exponential for a grid surface.

    theta is linear in the row f(t, .), and a grid surface's row at time t
    is a blend of two stored rows, so per stored row we keep the running
    integrals H0(z_j) = int_0^{z_j} g(z) e^{-delta(z_j - z)} dz and
    H1(z_j) = int_0^{z_j} (z_j - z) g(z) e^{-delta(z_j - z)} dz at the
    knots.  Any level x is then reached from the knot below in closed form.
    """

    def __init__(self, surface, model: LevyModel):
        self.delta = _require_exponential(model)
        self.surface = surface
        z = np.asarray(surface.x_grid, dtype=float)
        vals = np.asarray(surface.values, dtype=float)
        self.z = z
        self.g = vals
        self.slope = np.diff(vals, axis=1) / np.diff(z)
        d = np.diff(z)
        e0, e1, e2 = exp_moments(self.delta, d)
        q = np.exp(-self.delta * d)
        n_t, n_x = vals.shape
        H0 = np.zeros((n_t, n_x))
        H1 = np.zeros((n_t, n_x))
        for j in range(n_x - 1):
            gn = vals[:, j + 1]
            s = self.slope[:, j]
            H0[:, j + 1] = q[j] * H0[:, j] + gn * e0[j] - s * e1[j]
            H1[:, j + 1] = q[j] * (H1[:, j] + d[j] * H0[:, j]) + gn * e1[j] - s * e2[j]
        self.H0, self.H1 = H0, H1

    def _row_theta(self, i: int, x: np.ndarray) -> np.ndarray:
        delta, z = self.delta, self.z
        j = np.clip(np.searchsorted(z, x, side="right") - 1, 0, z.size - 1)
        s = np.where(j < z.size - 1, self.slope[i, np.minimum(j, z.size - 2)], 0.0)
        d = x - z[j]
        gx = self.g[i, j] + s * d
        e0, e1, e2 = exp_moments(delta, d)
        h0 = self.H0[i, j]
        h1 = np.exp(-delta * d) * (self.H1[i, j] + d * h0) + gx * e1 - s * e2
        E1x = exp_moments(delta, x)[1]
        ex = np.exp(-delta * x)
        return 0.5 * delta * (gx * ex * (1.0 + delta * x) + delta**2 * (gx * E1x - h1))

    def __call__(self, t: float, x) -> np.ndarray:
        """theta(t, x) for an array of levels x > 0 (no default indicator)."""
        x = np.asarray(x, dtype=float)
        i, k, w = self.surface._row_weights(t)
        out = self._row_theta(i, x)
        if w != 0.0:
            out = (1.0 - w) * out + w * self._row_theta(k, x)
        return out


def residual_table(f: SurfaceFn, t_points, x_points, model: LevyModel,
                   quad: QuadSpec = DEFAULT_QUAD) -> list[dict]:
    """Operator values on a (t, x) grid, x > 0, as a list of rows."""
    rows = []
    for t in t_points:
        for x in x_points:
            if x <= 0:
                continue
            vals = operator_values(f, float(t), float(x), model, quad)
            rows.append({"t": float(t), "x": float(x), **vals})
    return rows


def write_residual_csv(path, rows: list[dict]) -> None:
    """Columns t, x, A_f, K_f, L_f, theta."""
    cols = ["t", "x", "A_f", "K_f", "L_f", "theta"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in cols])


__all__ = [
    "QuadSpec", "QuadratureError", "ThetaDivergenceWarning", "apply_A", "apply_A_with_error",
    "apply_K_op", "apply_L", "operator_values", "theta_general", "theta_exponential",
    "ExpThetaTable", "jump_expectation", "exp_moments", "residual_table", "write_residual_csv",
]
