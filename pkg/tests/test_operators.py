from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from levyhedge.levy_model import Empirical, ExponentialNegative, benchmark_model, build_model, uniform_law
from levyhedge.operators import (ExpThetaTable, ThetaDivergenceWarning, apply_A, apply_A_with_error,
                                 apply_K_op, apply_L, operator_values, residual_table, theta_exponential,
                                 theta_general, write_residual_csv)
from levyhedge.quadrature import QuadSpec
from levyhedge.surface_fn import AnalyticSurface, ConstantSurface, GridSurface
from levyhedge.value_surface import as_surface_fn

MODEL = benchmark_model()


def smooth_surface(a=1.0, b=3.0, c=0.1):
    """f = e^{-a t} (1 - e^{-b x}) + c x^2, with exact partial derivatives."""
    return AnalyticSurface(
        lambda t, x: np.exp(-a * t) * (1 - np.exp(-b * x)) + c * x**2,
        lambda t, x: -a * np.exp(-a * t) * (1 - np.exp(-b * x)),
        lambda t, x: b * np.exp(-a * t) * np.exp(-b * x) + 2 * c * x,
    )


def jump_form(f, t, x, model, weight):
    """int weight(y, f(x+y) 1{x+y >= 0} - f(x)) nu(dy) by scipy quad, one density law."""
    fx = float(f.value(t, np.array([x]))[0])

    def g(y):
        fy = float(f.value(t, np.array([x + y]))[0]) if x + y >= 0 else 0.0
        return weight(y, fy - fx) * model.lam * float(model.jump_law.pdf(np.array([y]))[0])

    lo, hi = model.jump_law.cut(1e-16)
    pts = [p for p in (-x,) if lo < p < hi]
    return integrate.quad(g, lo, hi, points=pts or None, limit=500, epsabs=1e-15, epsrel=1e-13)[0]


def brute_A(f, t, x, model):
    loc = float(f.dt(t, np.array([x]))[0] + model.mu * f.dx(t, np.array([x]))[0])
    return loc + jump_form(f, t, x, model, lambda y, d: d)


def brute_K(f, t, x, model):
    return jump_form(f, t, x, model, lambda y, d: y * d)


def brute_L(f, t, x, model):
    return jump_form(f, t, x, model, lambda y, d: d * d) - brute_K(f, t, x, model) ** 2 / model.m2


@given(st.floats(0.0, 2.0), st.floats(1e-4, 1.0), st.floats(-5.0, 5.0))
@settings(max_examples=60, deadline=None)
def test_A_of_constant_is_killing_rate(t, x, c):
    exact = -c * 10.0 * math.exp(-100.0 * x)
    assert apply_A(ConstantSurface(c), t, x, MODEL) == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_A_of_identity_surface():
    f = AnalyticSurface(lambda t, x: x, lambda t, x: 0.0 * x, lambda t, x: 1.0 + 0.0 * x)
    for x in (0.001, 0.01, 0.05, 0.3):
        assert apply_A(f, 0.0, x, MODEL) == pytest.approx(10.0 * math.exp(-100 * x) / 100.0, rel=1e-10)


def test_K_of_one_closed_form():
    # lambda e^{-delta x}(x + 1/delta), here 10 e^{-1} * 0.02
    assert apply_K_op(ConstantSurface(1.0), 0.3, 0.01, MODEL) == pytest.approx(0.0735758882342885, rel=1e-12)


@pytest.mark.parametrize("model", [MODEL, build_model(0.5, 0.3, 2.0, uniform_law(-1.0, 0.0)),
                                   build_model(0.01, 0.2, 10.0, ExponentialNegative(100.0))])
@pytest.mark.parametrize("tx", [(0.0, 0.004), (0.7, 0.02), (1.5, 0.3), (1.0, 0.9)])
def test_operators_match_jump_form_oracle(model, tx):
    f = smooth_surface()
    t, x = tx
    vals = operator_values(f, t, x, model)
    assert vals["A_f"] == pytest.approx(brute_A(f, t, x, model), rel=1e-9, abs=1e-12)
    assert vals["K_f"] == pytest.approx(brute_K(f, t, x, model), rel=1e-9, abs=1e-13)
    assert vals["L_f"] == pytest.approx(brute_L(f, t, x, model), rel=1e-7, abs=1e-10)
    assert vals["theta"] == pytest.approx(vals["K_f"] / model.m2, rel=1e-15)


def test_empirical_law_uses_exact_sums():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = build_model(0.3, 0.1, 2.0, Empirical([-0.1, -0.2, -0.5]), allow_nonconforming=True)
    f = smooth_surface()
    x, t = 0.3, 0.4
    fx = float(f.value(t, np.array([x]))[0])
    ys = np.array([-0.1, -0.2, -0.5])
    fy = np.where(x + ys >= 0, f.value(t, x + ys), 0.0)
    jump = 2.0 * np.mean(fy - fx)
    loc = float(f.dt(t, np.array([x]))[0] + 0.1 * f.dx(t, np.array([x]))[0])
    assert apply_A(f, t, x, m) == pytest.approx(loc + jump, rel=1e-13)
    assert apply_K_op(f, t, x, m) == pytest.approx(2.0 * np.mean(ys * (fy - fx)), rel=1e-12)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(0.0, 2.0), st.floats(1e-3, 0.5))
@settings(max_examples=40, deadline=None)
def test_operators_are_linear(a, b, t, x):
    f, g = smooth_surface(), smooth_surface(0.5, 10.0, -0.2)
    h = f * a + g * b
    for op in (apply_A, apply_K_op):
        lhs = op(h, t, x, MODEL)
        rhs = a * op(f, t, x, MODEL) + b * op(g, t, x, MODEL)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-10)


@given(st.floats(-2.0, 2.0), st.floats(0.1, 20.0), st.floats(-1.0, 1.0), st.floats(0.0, 2.0),
       st.floats(1e-3, 0.6))
@settings(max_examples=60, deadline=None)
def test_residual_risk_is_nonnegative(a, b, c, t, x):
    f = smooth_surface(a, b, c)
    val = apply_L(f, t, x, MODEL)
    scale = apply_L(f, t, x, MODEL) + apply_K_op(f, t, x, MODEL) ** 2 / MODEL.m2
    assert val >= -1e-9 * max(scale, 1.0)


def test_residual_risk_of_constant():
    # lambda e^{-delta x} c^2 minus (K c)^2 / m2
    x, c = 0.01, 1.0
    k = 10 * math.exp(-1.0) * 0.02
    exact = 10 * math.exp(-1.0) - k * k / 0.002
    assert apply_L(ConstantSurface(c), 0.0, x, MODEL) == pytest.approx(exact, rel=1e-12)


def test_derivatives_replaced_by_central_differences():
    f = smooth_surface()
    h = 1e-3

    def cd(g, v):  # five-point central difference
        return (-g(v + 2 * h) + 8 * g(v + h) - 8 * g(v - h) + g(v - 2 * h)) / (12 * h)

    fd = AnalyticSurface(f._f,
                         lambda t, x: cd(lambda s: f._f(s, x), t),
                         lambda t, x: cd(lambda s: f._f(t, s), x))
    for t, x in ((0.5, 0.02), (1.2, 0.4)):
        a, b = apply_A(f, t, x, MODEL), apply_A(fd, t, x, MODEL)
        assert abs(a - b) <= 10 * 1e-10 * max(abs(a), 1.0)


def test_doubling_panel_budget_stays_within_error_bound():
    f = smooth_surface(1.0, 40.0, 0.0)
    for x in (0.003, 0.05, 0.5):
        a, err = apply_A_with_error(f, 0.3, x, MODEL, QuadSpec(panels=4096))
        b, _ = apply_A_with_error(f, 0.3, x, MODEL, QuadSpec(abs_tol=1e-14, rel_tol=1e-12, panels=8192))
        assert abs(a - b) <= err + 1e-12


def test_operators_reject_nonpositive_levels():
    for x in (0.0, -0.1):
        with pytest.raises(ValueError):
            apply_A(ConstantSurface(1.0), 0.0, x, MODEL)


def test_theta_of_one_closed_form_and_small_level_limit():
    one = ConstantSurface(1.0)
    assert theta_exponential(one, 0.0, 0.01, MODEL) == pytest.approx(50 * math.exp(-1) * 2, rel=1e-14)
    assert theta_general(one, 0.0, 0.01, MODEL) == pytest.approx(36.787944117144235, rel=1e-10)
    assert theta_exponential(one, 0.0, 1e-12, MODEL) == pytest.approx(50.0, rel=1e-9)


def test_theta_zero_after_default_and_for_zero_surface():
    assert theta_exponential(ConstantSurface(1.0), 0.5, 0.01, MODEL, defaulted=True) == 0.0
    assert theta_general(ConstantSurface(1.0), 0.5, 0.01, MODEL, defaulted=True) == 0.0
    assert theta_exponential(ConstantSurface(0.0), 0.5, 0.01, MODEL) == 0.0


def test_theta_exponential_rejects_other_laws():
    m = build_model(0.5, 0.5, 1.0, uniform_law(-1.0, 0.0))
    with pytest.raises(TypeError):
        theta_exponential(ConstantSurface(1.0), 0.0, 0.2, m)


def test_theta_forms_agree_on_smooth_and_grid_surfaces(small_surface):
    f = smooth_surface()
    for t, x in ((0.0, 0.005), (1.0, 0.05), (1.9, 0.6)):
        a, b = theta_general(f, t, x, MODEL), theta_exponential(f, t, x, MODEL)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-10)
    fn = as_surface_fn(small_surface)
    table = ExpThetaTable(fn, MODEL)
    xs = np.linspace(1e-4, small_surface.x_grid[-1] * 1.1, 57)
    for t in (0.0, 0.33, 1.0, 2.0):
        ref = np.array([theta_exponential(fn, t, float(x), MODEL) for x in xs])
        np.testing.assert_allclose(table(t, xs), ref, rtol=1e-11, atol=1e-12)


def test_theta_ratio_forms_differ_by_residual_over_beta():
    # for beta != 0, K f / m2 - A f / beta = -(A f - beta K f / m2) / beta, with the
    # bracket computed by an independent jump-form quadrature
    m = build_model(0.01, 0.2, 10.0, ExponentialNegative(100.0))
    f = smooth_surface()
    for t, x in ((0.2, 0.01), (1.0, 0.2)):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            th = theta_general(f, t, x, m)
        r = brute_A(f, t, x, m) - m.beta * brute_K(f, t, x, m) / m.m2
        assert th - brute_A(f, t, x, m) / m.beta == pytest.approx(-r / m.beta, rel=1e-7)
        assert any(issubclass(x_.category, ThetaDivergenceWarning) for x_ in w)


def test_no_warning_in_martingale_case():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        theta_general(smooth_surface(), 0.5, 0.1, MODEL)


def test_grid_surface_conventions():
    tg, xg = np.array([0.0, 1.0]), np.array([0.0, 0.5, 1.0])
    g = GridSurface(tg, xg, np.array([[0.2, 0.6, 1.0], [0.0, 0.5, 1.0]]))
    assert g.value(0.5, np.array([-0.1]))[0] == 0.0
    assert g.value(0.5, np.array([2.0]))[0] == 1.0
    assert g.dx(0.5, np.array([2.0]))[0] == 0.0
    assert g.value(0.5, np.array([0.25]))[0] == pytest.approx(0.5 * 0.4 + 0.5 * 0.25)


def test_residual_table_csv(tmp_path):
    rows = residual_table(ConstantSurface(1.0), [0.0, 1.0], [0.0, 0.01, 0.1], MODEL)
    assert len(rows) == 4
    out = tmp_path / "ops.csv"
    write_residual_csv(out, rows)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,A_f,K_f,L_f,theta" and len(lines) == 5
