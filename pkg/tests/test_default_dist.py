from __future__ import annotations

import math

import numpy as np
import pytest

from levyhedge.default_dist import (harmonic_exponential, identity_is_vacuous, intensity_compensator_check,
                                    martingale_identity_check, survival_probability)
from levyhedge.levy_model import ExponentialNegative, benchmark_model, build_model, uniform_law
from levyhedge.path_sim import batch_simulate

MODEL = benchmark_model()
DRIFTED = build_model(0.01, 0.2, 10.0, ExponentialNegative(100.0))


def test_survival_matches_batch_default_rate():
    est = survival_probability(MODEL, 2.0, 0.01, 20_000, 12)
    res = batch_simulate(MODEL, 2.0, 20_000, 12)
    assert est.value == 1.0 - res.default_rate
    assert est.std_err == res.std_err


def test_survival_monotone_in_level_and_horizon():
    by_u = [survival_probability(MODEL, 1.0, u, 5000, 3).value for u in (0.005, 0.01, 0.05, 0.2)]
    by_T = [survival_probability(MODEL, T, 0.01, 5000, 3).value for T in (0.25, 0.5, 1.0, 2.0)]
    assert by_u == sorted(by_u)
    assert by_T == sorted(by_T, reverse=True)


def test_harmonic_function_constants():
    F, c, k = harmonic_exponential(DRIFTED)
    assert c == pytest.approx(0.5) and k == pytest.approx(-50.0)
    assert F(0.01) == pytest.approx(1 - 0.5 * math.exp(-0.5), rel=1e-15)
    assert identity_is_vacuous(MODEL) and not identity_is_vacuous(DRIFTED)


def test_identity_reported_vacuous_in_martingale_case():
    rep = martingale_identity_check(MODEL, 1.0, 2000, 1)
    assert rep.vacuous and rep.status == "identity vacuous"
    assert rep.rhs == 0.0


def test_identity_at_time_zero_is_exact():
    rep = martingale_identity_check(DRIFTED, 0.0, 10, 1)
    assert rep.lhs == rep.rhs and rep.status == "pass"


def test_identity_holds_across_seeds():
    z = []
    for seed in range(60):
        rep = martingale_identity_check(DRIFTED, 0.5, 2000, seed)
        z.append(rep.discrepancy / rep.std_err)
        assert rep.lhs == pytest.approx(rep.survival - rep.exp_moment, abs=1e-12)
    z = np.array(z)
    assert np.mean(np.abs(z) > 3) <= 0.05
    assert abs(z.mean()) <= 4 / math.sqrt(z.size)


def test_identity_needs_exponential_jumps():
    m = build_model(0.5, 0.5, 1.0, uniform_law(-1.0, 0.0))
    with pytest.raises(TypeError):
        martingale_identity_check(m, 1.0, 10, 1)


@pytest.mark.parametrize("model", [MODEL, DRIFTED, build_model(0.3, 0.5, 1.0, uniform_law(-1.0, 0.0))])
def test_compensator_matches_default_indicator(model):
    for t in (0.0, 0.5, 1.5):
        rep = intensity_compensator_check(model, t, 20_000, 77)
        assert rep.passed, rep.to_dict()
