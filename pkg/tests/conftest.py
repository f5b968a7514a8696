import numpy as np
import pytest

from snlse_lab import SpectralGrid, SpectralState


def make_state(grid, rng, decay=2.0, band=None, time=0.0):
    """Random state with |k|-power-law coefficient decay, optionally band-limited."""
    k = np.abs(grid.mode_indices).astype(float)
    c = rng.standard_normal(grid.num_modes) + 1j * rng.standard_normal(grid.num_modes)
    c /= (1.0 + k) ** decay
    if band is not None:
        c[np.abs(grid.mode_indices) > band] = 0.0
    return SpectralState(grid, c, time)


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


@pytest.fixture
def grid32():
    return SpectralGrid(32)


@pytest.fixture
def grid8():
    return SpectralGrid(8)
