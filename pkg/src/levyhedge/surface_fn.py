"""Surfaces f(t, x) with first derivatives, as consumed by the operators.

Every surface evaluates vectorised in x at a scalar t.  ``knots`` lists the
x-locations where f(t, .) may fail to be smooth (quadrature breakpoints);
``linear_row`` returns an exact piecewise-linear description of f(t, .) on
[0, inf) when one exists, which enables closed-form jump integrals.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class SurfaceFn:
    knots: np.ndarray = np.empty(0)

    def value(self, t: float, x):
        raise NotImplementedError

    def dt(self, t: float, x):
        raise NotImplementedError

    def dx(self, t: float, x):
        raise NotImplementedError

    def linear_row(self, t: float) -> Optional[tuple[np.ndarray, np.ndarray]]:
        return None

    def times_x(self) -> "SurfaceFn":
        """K(t, x) = x f(t, x)."""
        return TimesX(self)

    def squared(self) -> "SurfaceFn":
        return Squared(self)

    def __mul__(self, a: float) -> "SurfaceFn":
        return Combination([(float(a), self)])

    __rmul__ = __mul__

    def __add__(self, other: "SurfaceFn") -> "SurfaceFn":
        return Combination([(1.0, self), (1.0, other)])


class AnalyticSurface(SurfaceFn):
    """Surface given by vectorised callables ``f(t, x)``, ``f_t``, ``f_x``."""

    def __init__(self, f: Callable, f_t: Callable, f_x: Callable, knots=()):
        self._f, self._ft, self._fx = f, f_t, f_x
        self.knots = np.asarray(knots, dtype=float)

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._f(t, x), dtype=float), x.shape).copy()

    def dt(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._ft(t, x), dtype=float), x.shape).copy()

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._fx(t, x), dtype=float), x.shape).copy()


class ConstantSurface(SurfaceFn):
    """f = c on the whole real line."""

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, t, x):
        return np.full(np.shape(x), self.c)

    def dt(self, t, x):
        return np.zeros(np.shape(x))

    dx = dt

    def linear_row(self, t):
        return np.array([0.0]), np.array([self.c])


class TimesX(SurfaceFn):
    def __init__(self, f: SurfaceFn):
        self.f = f
        self.knots = f.knots

    def value(self, t, x):
        return np.asarray(x) * self.f.value(t, x)

    def dt(self, t, x):
        return np.asarray(x) * self.f.dt(t, x)

    def dx(self, t, x):
        return self.f.value(t, x) + np.asarray(x) * self.f.dx(t, x)


class Squared(SurfaceFn):
    def __init__(self, f: SurfaceFn):
        self.f = f
        self.knots = f.knots

    def value(self, t, x):
        return self.f.value(t, x) ** 2

    def dt(self, t, x):
        return 2.0 * self.f.value(t, x) * self.f.dt(t, x)

    def dx(self, t, x):
        return 2.0 * self.f.value(t, x) * self.f.dx(t, x)


class Combination(SurfaceFn):
    def __init__(self, terms):
        flat = []
        for a, s in terms:
            if isinstance(s, Combination):
                flat.extend((a * b, t) for b, t in s.terms)
            else:
                flat.append((a, s))
        self.terms = flat
        ks = [s.knots for _, s in flat if s.knots.size]
        self.knots = np.unique(np.concatenate(ks)) if ks else np.empty(0)

    def _sum(self, method, t, x):
        return sum(a * getattr(s, method)(t, x) for a, s in self.terms)

    def value(self, t, x):
        return self._sum("value", t, x)

    def dt(self, t, x):
        return self._sum("dt", t, x)

    def dx(self, t, x):
        return self._sum("dx", t, x)


class GridSurface(SurfaceFn):
    """Bilinear interpolant of node values on a tensor grid.

    Derivatives are second-order finite differences at the nodes (one-sided
    at the edges), themselves interpolated bilinearly.  Below x = 0 the
    surface is 0 (defaulted region); beyond the last x node it is extended
    as a constant, as are its derivatives.
    """

    def __init__(self, t_grid, x_grid, values):
        self.t_grid = np.asarray(t_grid, dtype=float)
        self.x_grid = np.asarray(x_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.t_grid.size, self.x_grid.size):
            raise ValueError("values must have shape (len(t_grid), len(x_grid))")
        if self.x_grid[0] != 0.0:
            raise ValueError("x grid must start at 0")
        self.knots = self.x_grid
        edge = 2 if min(self.t_grid.size, self.x_grid.size) >= 3 else 1
        self.grad_t = np.gradient(self.values, self.t_grid, axis=0, edge_order=edge)
        self.grad_x = np.gradient(self.values, self.x_grid, axis=1, edge_order=edge)

    def _row_weights(self, t: float):
        tg = self.t_grid
        if t <= tg[0]:
            return 0, 0, 0.0
        if t >= tg[-1]:
            n = tg.size - 1
            return n, n, 0.0
        i = int(np.searchsorted(tg, t, side="right")) - 1
        w = (t - tg[i]) / (tg[i + 1] - tg[i])
        return i, i + 1, w

    def _interp(self, arr, t, x):
        x = np.asarray(x, dtype=float)
        i, j, w = self._row_weights(t)
        row = arr[i] if w == 0.0 else (1.0 - w) * arr[i] + w * arr[j]
        out = np.interp(x, self.x_grid, row)
        return np.where(x < 0, 0.0, out)

    def row(self, t: float) -> np.ndarray:
        i, j, w = self._row_weights(t)
        return self.values[i] if w == 0.0 else (1.0 - w) * self.values[i] + w * self.values[j]

    def value(self, t, x):
        return self._interp(self.values, t, x)

    def dt(self, t, x):
        return self._interp(self.grad_t, t, x)

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        out = self._interp(self.grad_x, t, x)
        return np.where(x > self.x_grid[-1], 0.0, out)

    def linear_row(self, t):
        return self.x_grid, self.row(t)
