"""
Shared fixtures: small meshes and a helper that writes a polynomial field into control-point values
"""

import numpy as np
import pytest

from flexoiga.iga.patch_geometry import bilinear_patch, build_mesh, map_point, physical_basis


def fit_field(mesh, func, samples=7):
    """Control values of func on every patch (exact when func lies in the spline space)."""
    values = np.zeros(mesh.n_nodes)
    grid = np.linspace(0.0, 1.0, samples)
    for k, patch in enumerate(mesh.patches):
        rows, rhs = [], []
        for eta in grid:
            for xi in grid:
                pb = physical_basis(patch, xi, eta)
                row = np.zeros(patch.n_ctrl)
                row[pb.indices] = pb.R
                rows.append(row)
                rhs.append(func(*map_point(patch, xi, eta)))
        coeffs = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
        values[mesh.node_maps[k]] = coeffs
    return values


def field_vector(mesh, ux=None, uy=None, phi=None):
    """Full unscaled DOF vector [u interleaved, phi] from three scalar functions."""
    N = mesh.n_nodes
    U = np.zeros(3 * N)
    if ux is not None:
        U[0:2 * N:2] = fit_field(mesh, ux)
    if uy is not None:
        U[1:2 * N:2] = fit_field(mesh, uy)
    if phi is not None:
        U[2 * N:] = fit_field(mesh, phi)
    return U


def two_squares(degree=3, n_elements=(1, 1)):
    left = bilinear_patch([(0, 0), (1, 0), (1, 1), (0, 1)], (degree, degree), n_elements, "left")
    right = bilinear_patch([(1, 0), (2, 0), (2, 1), (1, 1)], (degree, degree), n_elements, "right")
    return build_mesh([left, right])


@pytest.fixture
def square_mesh():
    return build_mesh([bilinear_patch([(0, 0), (1, 0), (1, 1), (0, 1)], (3, 3), (2, 2), "square")])


@pytest.fixture
def two_square_mesh():
    return two_squares()
