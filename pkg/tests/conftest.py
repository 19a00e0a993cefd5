import numpy as np
import pytest

from rbffd.geometry import generate_unit_disk_nodes, spacing_for_node_count
from rbffd.neighborhoods import build_stencils
from rbffd.weights import assemble_shapes


@pytest.fixture(scope="session")
def disk500():
    """Node set with roughly 500 nodes, shared across tests."""
    return generate_unit_disk_nodes(spacing_for_node_count(500), seed=3)


@pytest.fixture(scope="session")
def pipeline500(disk500):
    """(nodes, stencils, shapes) for the shared 500-node set, m=2, n=12."""
    stencils = build_stencils(disk500, 12)
    shapes = assemble_shapes(disk500, stencils, 2)
    return disk500, stencils, shapes


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
