"""Locally risk-minimizing hedging of defaultable claims on a jump firm-value process."""
from __future__ import annotations

from .levy_model import (ExponentialNegative, Empirical, LevyModel, ModelError, UserDensity,
                         beta, build_model, second_moment, tail_mass, uniform_law)
from .path_sim import SamplePath, batch_simulate, default_time, sample_at, simulate_path
from .quadrature import QuadratureError, QuadSpec
from .rng import RngStream

__version__ = "0.1.0"
