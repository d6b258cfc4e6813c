import pytest

from iselab.grid import GridSpec
from iselab.potentials import load_model


@pytest.fixture
def unit_grid():
    """Periodic 2D box of side 4 with unit spacing (16 nodes)."""
    return GridSpec(dimension=2, side=4.0, spacing=1.0, boundary="periodic")


@pytest.fixture
def fine_grid():
    """Periodic 2D box of side 4 at 8 nodes per unit (1024 nodes)."""
    return GridSpec(dimension=2, side=4.0, spacing=0.125, boundary="periodic")


@pytest.fixture
def gapped_model():
    from iselab.reference import reference_model_spec
    return load_model(reference_model_spec())
