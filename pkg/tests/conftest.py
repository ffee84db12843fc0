"""Shared fixtures: small grids, DOF maps, assembled systems and default parameters."""

import numpy as np
import pytest

from src.discretization.forms import MaterialParams, assemble_system
from src.discretization.mesh import GridSpec, build_mesh
from src.discretization.spaces import build_field_dofmaps
from src.dynamics.state import SchemeConfig
from src.utils.solve_tracker import get_tracker


@pytest.fixture(autouse=True)
def _reset_solver_stats():
    get_tracker().reset_stats()
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return MaterialParams()


@pytest.fixture
def coupled_params():
    """Non-default coefficients so sign and scaling mistakes show up."""
    return MaterialParams(rho_b=1.3, rho_f=0.8, lam=0.7, mu=1.1, alpha=0.6, c0=0.9, k=0.4, nu=0.9, beta=1.7)


@pytest.fixture
def make_system():
    """Factory: (dim, n, params) -> (mesh, dofmaps, system)."""

    def _make(dim=2, n=1, params=None, constrained=True):
        mesh = build_mesh(GridSpec(dim=dim, n=n))
        dofmaps = build_field_dofmaps(mesh)
        system = assemble_system(params or MaterialParams(), mesh, dofmaps, constrained=constrained)
        return mesh, dofmaps, system

    return _make


@pytest.fixture
def mesh_2d():
    return build_mesh(GridSpec(dim=2, n=2))


@pytest.fixture
def dofmaps_2d(mesh_2d):
    return build_field_dofmaps(mesh_2d)


@pytest.fixture
def crank_nicolson():
    return SchemeConfig(theta=0.5, dt=0.05, steps=10)


@pytest.fixture
def backward_euler():
    return SchemeConfig(theta=1.0, dt=0.05, steps=10)
