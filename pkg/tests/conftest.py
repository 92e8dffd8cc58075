import time

import numpy as np
import pytest

from aefie_mor import assemble_fom, discretize_dipole
from aefie_mor.analysis import FrequencyGrid, fom_sweep, run_comparison

COPPER = 1.68e-8


@pytest.fixture(scope="session")
def small_model():
    return discretize_dipole(1.0, 1e-4, COPPER, 10)


@pytest.fixture(scope="session")
def small_fom(small_model):
    return assemble_fom(small_model)


@pytest.fixture(scope="session")
def small_grid():
    return FrequencyGrid.logspace(0.1, 1e9, 20)


@pytest.fixture(scope="session")
def small_sweep(small_fom, small_model, small_grid):
    return fom_sweep(small_fom, small_grid, small_model.feed_segment)


@pytest.fixture(scope="session")
def default_model():
    return discretize_dipole(1.0, 1e-4, COPPER, 499)


@pytest.fixture(scope="session")
def default_fom(default_model):
    return assemble_fom(default_model)


@pytest.fixture(scope="session")
def default_grid():
    return FrequencyGrid.logspace(0.1, 1e9, 300)


@pytest.fixture(scope="session")
def default_comparison(default_model, default_grid):
    # assembled afresh so the recorded time covers the whole pipeline
    t0 = time.perf_counter()
    comp = run_comparison(default_model, default_grid, tolerance=1e-3)
    comp.elapsed = time.perf_counter() - t0
    return comp


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)
