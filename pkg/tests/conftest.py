"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from fmca.grids import Grid


@pytest.fixture
def unit_grid():
    return Grid.uniform(0.0, 1.0, 51)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
