import numpy as np
import pytest

from spinemfpt import asymptotics, fem, geometry


@pytest.fixture(scope="session")
def unit_head_robin():
    """Head-only Robin geometry at the benchmark row eps=0.1, L=1."""
    return geometry.build_head_only(1.0, 0.1, 1.0, 0.5)


@pytest.fixture(scope="session")
def phi_instance(unit_head_robin):
    """One shared numeric-Phi solve on the unit disk (setup ~1 s)."""
    return asymptotics.PhiNumeric(unit_head_robin)


@pytest.fixture(scope="session")
def spine_row1():
    return geometry.build_straight_spine(1.0, 0.1, 1.0)


@pytest.fixture(scope="session")
def spine_row1_mesh(spine_row1):
    return fem.generate_mesh(spine_row1, 0.02)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260818)
