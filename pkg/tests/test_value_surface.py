from __future__ import annotations

import numpy as np
import pytest

from conftest import THREADS
from levyhedge.levy_model import ExponentialNegative, benchmark_model, build_model
from levyhedge.operators import apply_A
from levyhedge.surface_fn import ConstantSurface
from levyhedge.value_surface import (NonMartingaleError, Payoff, ValueSurface, as_surface_fn, bond_payoff,
                                     default_grids, estimate_surface, load_surface, martingale_check,
                                     pide_residual, save_surface)

MODEL = benchmark_model()


def test_terminal_row_is_payoff_exactly(small_surface):
    s = small_surface
    assert np.array_equal(s.values[-1], s.payoff(s.x_grid))
    assert np.all(s.std_err[-1] == 0)


def test_bond_surface_range_and_monotonicity(small_surface):
    v = small_surface.values
    assert v.min() >= 0.0 and v.max() <= 1.0
    # common paths make monotonicity exact rather than statistical
    assert np.all(np.diff(v, axis=1) >= 0)      # increasing in x
    assert np.all(np.diff(v, axis=0) >= 0)      # shorter time to maturity survives more


def test_initial_level_is_a_grid_node_and_matches_survival(example_surface):
    v, se = example_surface.node(0.0, 0.01)
    assert abs(v - 0.245005) <= 3 * se


def test_standard_error_halves_when_paths_quadruple():
    tg, xg = default_grids(MODEL, 2.0, 11, 11)
    a = estimate_surface(MODEL, bond_payoff(), 2.0, tg, xg, 10_000, 3, THREADS)
    b = estimate_surface(MODEL, bond_payoff(), 2.0, tg, xg, 40_000, 3, THREADS)
    mask = a.std_err[:-1] > 1e-3
    ratio = np.mean(b.std_err[:-1][mask]) / np.mean(a.std_err[:-1][mask])
    assert 0.45 <= ratio <= 0.55


def test_linear_and_call_payoffs_agree():
    tg, xg = default_grids(MODEL, 2.0, 9, 9)
    a = estimate_surface(MODEL, Payoff("linear", (0.0, 1.0)), 2.0, tg, xg, 5000, 8)
    b = estimate_surface(MODEL, Payoff("call", (0.0,)), 2.0, tg, xg, 5000, 8)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-15)


def test_surface_independent_of_parallelism():
    tg, xg = default_grids(MODEL, 2.0, 9, 9)
    a = estimate_surface(MODEL, bond_payoff(), 2.0, tg, xg, 20_000, 4, 1)
    b = estimate_surface(MODEL, bond_payoff(), 2.0, tg, xg, 20_000, 4, 4)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.std_err, b.std_err)


def test_nonmartingale_requires_acknowledgement():
    m = build_model(0.01, 0.2, 10.0, ExponentialNegative(100.0))
    tg, xg = default_grids(m, 1.0, 5, 5)
    with pytest.raises(NonMartingaleError):
        estimate_surface(m, bond_payoff(), 1.0, tg, xg, 100, 1)
    with pytest.warns(UserWarning):
        s = estimate_surface(m, bond_payoff(), 1.0, tg, xg, 100, 1, nonmartingale_ack=True)
    assert s.values.shape == (5, xg.size)


def test_grid_validation():
    with pytest.raises(ValueError):
        estimate_surface(MODEL, bond_payoff(), 2.0, [0.0, 1.0], [0.0, 1.0], 100, 1)
    with pytest.raises(ValueError):
        estimate_surface(MODEL, bond_payoff(), 2.0, [0.0, 2.0], [0.1, 1.0], 100, 1)
    with pytest.raises(ValueError):
        estimate_surface(MODEL, bond_payoff(), 2.0, [0.0, 2.0], [0.0, 1.0], 1, 1)


def test_save_load_round_trip(tmp_path, small_surface):
    c, j = tmp_path / "s.csv", tmp_path / "s.json"
    save_surface(small_surface, c, j)
    back = load_surface(c, j, MODEL)
    assert np.array_equal(back.values, small_surface.values)
    assert np.array_equal(back.std_err, small_surface.std_err)
    assert np.array_equal(back.x_grid, small_surface.x_grid)
    assert back.payoff == small_surface.payoff and back.horizon == small_surface.horizon
    assert c.read_text().splitlines()[0] == "t,x,f_hat,std_err"


def test_interpolated_surface_hits_nodes(small_surface):
    fn = as_surface_fn(small_surface)
    i = 7
    t = float(small_surface.t_grid[i])
    np.testing.assert_array_equal(fn.value(t, small_surface.x_grid), small_surface.values[i])
    assert np.all(fn.dx(t, small_surface.x_grid[1:-1]) >= 0)


def test_pide_residual_of_exact_constant_surface():
    tg, xg = default_grids(MODEL, 2.0, 5, 9)
    ones = np.ones((tg.size, xg.size))
    s = ValueSurface(tg, xg, ones, np.zeros_like(ones), bond_payoff(), 1, 0, 2.0, MODEL)
    rep = pide_residual(s, MODEL)
    for j, x in enumerate(xg):
        if x > 0:
            np.testing.assert_allclose(rep.residual[:, j], apply_A(ConstantSurface(1.0), 0.0, x, MODEL),
                                       rtol=1e-12)
    assert np.all(np.isnan(rep.residual[:, 0]))


def test_pide_residual_within_noise_on_estimated_surface(example_surface):
    rep = pide_residual(example_surface, MODEL)
    assert rep.interior_pass_rate >= 0.95
    assert np.all(np.isfinite(rep.residual[:, 1:]))


def test_martingale_check_on_small_surface(small_surface):
    chk = martingale_check(small_surface, MODEL, [0.0, 0.5, 1.0, 2.0], 20_000, 55, THREADS)
    assert chk.passed
    assert chk.z_scores[0] == 0.0
