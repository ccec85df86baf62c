import numpy as np
import pytest

from striplayers.domain import HandleParams, LayerParams
from striplayers.maxsolve import solve_handle, solve_layer
from striplayers.meshing import MeshParams, mesh_handle_strip, mesh_layer_cell


@pytest.fixture(scope="session")
def small_layer_field():
    """Coarse periodic-cell solution used across the unit tests."""
    return solve_layer(LayerParams(0.5, 1.5), MeshParams(h=0.15))


@pytest.fixture(scope="session")
def small_handle_pair():
    """Coarse punctured-strip solve (with its layer far field)."""
    params = HandleParams(1.0, 2.0)
    mp = MeshParams(h=0.2, eps=0.1, L=4)
    lay = solve_layer(params.layer_params(), mp)
    fld = solve_handle(params, mp, lay)
    return lay, fld


@pytest.fixture(scope="session")
def small_handle_mesh():
    return mesh_handle_strip(HandleParams(1.0, 2.0), MeshParams(h=0.2, eps=0.1, L=4))


@pytest.fixture(scope="session")
def small_layer_mesh():
    return mesh_layer_cell(LayerParams(0.5, 1.5), MeshParams(h=0.15))
