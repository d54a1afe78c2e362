import numpy as np
import pytest

from mcfspi.experiments import (
    DEFAULT_DISTANCE,
    DEFAULT_FIBER_DIAMETER,
    DEFAULT_WAVELENGTH,
    build_layout,
    grid_for_layout,
)


@pytest.fixture
def physical_defaults():
    return dict(D=DEFAULT_FIBER_DIAMETER, wavelength=DEFAULT_WAVELENGTH,
                z=DEFAULT_DISTANCE)


@pytest.fixture
def small_layout():
    """12-core Fermat spiral at the desk-scale defaults."""
    return build_layout("fermat", 12)


@pytest.fixture
def small_grid(small_layout):
    return grid_for_layout(small_layout, 16)


def random_layout(rng, Q, D=DEFAULT_FIBER_DIAMETER):
    """Q cores at random distinct positions inside the fiber disk."""
    from mcfspi.geometry import CoreLayout

    r = (D / 2) * np.sqrt(rng.uniform(0.05, 1.0, size=Q))
    th = rng.uniform(0, 2 * np.pi, size=Q)
    pos = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    return CoreLayout(pos, D, DEFAULT_WAVELENGTH, DEFAULT_DISTANCE)
