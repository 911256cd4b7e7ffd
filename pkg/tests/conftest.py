from __future__ import annotations

import os

import pytest

from levyhedge.levy_model import benchmark_model
from levyhedge.rng import derive_seed
from levyhedge.value_surface import bond_payoff, default_grids, estimate_surface

THREADS = min(4, os.cpu_count() or 1)

# (criterion number, passed, detail) lines collected by the acceptance tests
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def example_model():
    return benchmark_model()


@pytest.fixture(scope="session")
def example_surface(example_model):
    """Bond surface of the example model on the default 81 x 82 grid, 2e5 paths."""
    tg, xg = default_grids(example_model, 2.0)
    return estimate_surface(example_model, bond_payoff(), 2.0, tg, xg, 200_000,
                            derive_seed(12345, "surface"), THREADS)


@pytest.fixture(scope="session")
def small_surface(example_model):
    """Coarser, cheaper surface for unit tests (41 x 42 nodes, 2e4 paths)."""
    tg, xg = default_grids(example_model, 2.0, 41, 41)
    return estimate_surface(example_model, bond_payoff(), 2.0, tg, xg, 20_000, 777, THREADS)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
