import numpy as np
import pytest

from hall_edge_lab.lattice import HaldaneParams, build_haldane

FLAGSHIP = HaldaneParams(t1=1.0, t2=0.5, phi=np.pi / 2, W=0.0)


@pytest.fixture(scope="session")
def flagship_params():
    return FLAGSHIP


@pytest.fixture(scope="session")
def flagship_cylinder():
    """Spinful topological Haldane cylinder, L = 40, mu = 0."""
    return build_haldane(FLAGSHIP, 40, 0.0, True, "cylinder")


@pytest.fixture(scope="session")
def flagship_edges(flagship_cylinder):
    from hall_edge_lab.spectral import detect_edge_states

    return detect_edge_states(flagship_cylinder, grid=40)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
