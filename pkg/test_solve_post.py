"""
Tests for the linear solve, field sampling, energies and the beam reference model
"""

import dataclasses
import math

import numpy as np
import pytest
from scipy.sparse import csr_matrix

from conftest import fit_field
from flexoiga.errors import InvalidArgumentError, NotApplicableError, SolverFailureError
from flexoiga.fem import solve_post
from flexoiga.fem.fe_assembly import BoundarySpec, assemble
from flexoiga.fem.flexo_material import MaterialSet
from flexoiga.fem.solve_post import (
    SolutionField,
    analytical_kem,
    energies,
    external_work,
    hprime_thickness,
    interface_jump_metric,
    line_profile,
    mean_displacement,
    potential_difference,
    sample_fields,
    solve,
)
from flexoiga.iga.lattice import rectangle_patches
from flexoiga.iga.patch_geometry import build_mesh

ELASTIC = MaterialSet(E=1.0, nu=0.3, e11=0.0, e21=0.0, mu11=0.0, mu12=0.0, L=0.1)


def _field(mesh, ux=None, uy=None, phi=None):
    u = np.zeros((mesh.n_nodes, 2))
    if ux is not None:
        u[:, 0] = fit_field(mesh, ux)
    if uy is not None:
        u[:, 1] = fit_field(mesh, uy)
    p = fit_field(mesh, phi) if phi is not None else np.zeros(mesh.n_nodes)
    return SolutionField(u=u, phi=p, beta=1.0, residual=0.0, n_dofs=mesh.n_dofs, n_free=mesh.n_dofs)


def _cantilever(n_patches=2, elements=(4, 2)):
    return build_mesh(rectangle_patches(10e-6, 1e-6, n_patches, 1, 3, elements))


def _cantilever_bc(mesh, load=-1.0):
    left = mesh.boundary_nodes("left")
    bc = BoundarySpec().fix_displacement(left)
    bc.fix_potential([int(left[np.argmin(mesh.nodes[left, 1])])], 0.0)
    bc.add_traction(mesh.boundary_edge_list("right"), (0.0, load / 1e-6))
    return bc


def _tension(mesh, mat=ELASTIC, stress=1.0):
    bc = BoundarySpec()
    bc.fix_displacement(mesh.boundary_nodes("left"), (0,))
    bc.fix_displacement(mesh.boundary_nodes("bottom"), (1,))
    bc.fix_potential([0], 0.0)
    bc.add_traction(mesh.boundary_edge_list("right"), (stress, 0.0))
    return assemble(mesh, mat, bc)


def test_zero_load_gives_zero_field(square_mesh):
    bc = BoundarySpec().fix_displacement(square_mesh.boundary_nodes("left")).fix_potential([0], 0.0)
    sol = solve(assemble(square_mesh, MaterialSet(), bc))
    assert not sol.u.any() and not sol.phi.any()
    assert sol.residual == 0.0


def test_prescribed_translation_is_reproduced(square_mesh):
    bc = BoundarySpec()
    for side in ("bottom", "top", "left", "right"):
        nodes = square_mesh.boundary_nodes(side)
        bc.fix_displacement(nodes, (0,), 2e-3).fix_displacement(nodes, (1,), -1e-3)
    bc.fix_potential([0], 0.0)
    sol = solve(assemble(square_mesh, ELASTIC, bc))
    np.testing.assert_allclose(sol.u[:, 0], 2e-3, rtol=1e-10)
    np.testing.assert_allclose(sol.u[:, 1], -1e-3, rtol=1e-10)
    assert np.abs(sol.phi).max() < 1e-12


def test_homogeneous_tension_is_exact(square_mesh):
    system = _tension(square_mesh)
    sol = solve(system)
    nu = ELASTIC.nu
    eps11 = (1.0 - nu ** 2) / ELASTIC.E
    eps22 = -nu * (1.0 + nu) / ELASTIC.E
    x, y = square_mesh.nodes.T
    np.testing.assert_allclose(sol.u[:, 0], eps11 * x, atol=1e-12)
    np.testing.assert_allclose(sol.u[:, 1], eps22 * y, atol=1e-12)
    assert sol.residual < 1e-9

    report = energies(sol, square_mesh, ELASTIC)
    assert report.W_mech == pytest.approx(0.5 * eps11, rel=1e-10)
    assert report.W_elec == pytest.approx(0.0, abs=1e-20)
    assert report.K_EM == pytest.approx(0.0, abs=1e-9)
    assert external_work(sol, system) == pytest.approx(report.W_mech, rel=1e-10)


def test_energy_balance_continuous_patches():
    mesh = _cantilever()
    system = assemble(mesh, MaterialSet(), _cantilever_bc(mesh), dg=False)
    sol = solve(system)
    report = energies(sol, mesh, MaterialSet())
    assert report.W_mech == pytest.approx(external_work(sol, system), rel=1e-6)
    assert report.W_elec > 0.0


def test_energy_balance_with_interior_penalty():
    mesh = _cantilever()
    system = assemble(mesh, MaterialSet(), _cantilever_bc(mesh), tau=4e10)
    sol = solve(system)
    report = energies(sol, mesh, MaterialSet())
    assert report.W_mech == pytest.approx(external_work(sol, system), rel=1e-2)


def test_superposition():
    mesh = _cantilever()
    single = solve(assemble(mesh, MaterialSet(), _cantilever_bc(mesh, -1.0), dg=False))
    double = solve(assemble(mesh, MaterialSet(), _cantilever_bc(mesh, -2.0), dg=False))
    np.testing.assert_allclose(double.u, 2.0 * single.u, rtol=1e-10, atol=1e-10 * np.abs(double.u).max())
    np.testing.assert_allclose(double.phi, 2.0 * single.phi, rtol=1e-10, atol=1e-10 * np.abs(double.phi).max())


def test_matches_dense_reference_solve():
    mesh = _cantilever(n_patches=1, elements=(6, 2))
    system = assemble(mesh, MaterialSet(), _cantilever_bc(mesh))
    sol = solve(system)
    K, F = system.reduced()
    U = system.expand(np.linalg.solve(K.toarray(), F))
    N = mesh.n_nodes
    np.testing.assert_allclose(sol.u.ravel(), U[:2 * N], rtol=1e-8, atol=1e-8 * np.abs(U[:2 * N]).max())
    np.testing.assert_allclose(sol.phi, U[2 * N:] * system.beta, rtol=1e-8,
                               atol=1e-8 * np.abs(U[2 * N:]).max() * system.beta)


def test_scaling_does_not_change_the_solution():
    mesh = _cantilever(n_patches=1)
    bc = _cantilever_bc(mesh)
    solutions = [solve(assemble(mesh, MaterialSet(), bc, beta=beta)) for beta in (1e8, 1e10, 1e12)]
    ref = solutions[1]
    for sol in solutions:
        np.testing.assert_allclose(sol.u, ref.u, rtol=1e-6, atol=1e-6 * np.abs(ref.u).max())
        np.testing.assert_allclose(sol.phi, ref.phi, rtol=1e-6, atol=1e-6 * np.abs(ref.phi).max())


def test_floating_potential_nodes_share_tied_value():
    mesh = _cantilever(n_patches=1)
    bc = _cantilever_bc(mesh)
    top = mesh.boundary_nodes("top")
    bc.tie_potential(top)
    sol = solve(assemble(mesh, MaterialSet(), bc))
    assert np.ptp(sol.phi[top]) == 0.0
    grounded = next(iter(bc.phi_fixed))
    assert sol.phi[grounded] == 0.0


def test_singular_system_reports_failure(square_mesh):
    system = _tension(square_mesh)
    zero_uu = csr_matrix(system.K_uu.shape)
    zero_uphi = csr_matrix(system.K_uphi.shape)
    broken = dataclasses.replace(system, K_uu=zero_uu, K_I_uu=zero_uu, K_uphi=zero_uphi, K_I_uphi=zero_uphi,
                                 K_phiphi=csr_matrix(system.K_phiphi.shape))
    with pytest.raises(SolverFailureError) as info:
        solve(broken)
    assert info.value.condition_estimate == math.inf


@pytest.mark.parametrize("tau", [1e8, 1e10, 4e10])
def test_penalized_solve_meets_residual_tolerance(tau):
    mesh = build_mesh(rectangle_patches(4e-6, 1e-6, 2, 1, 2, (1, 1)))
    left = mesh.boundary_nodes("left")
    bc = BoundarySpec().fix_displacement(left).fix_potential([int(left[0])], 0.0)
    right = mesh.boundary_nodes("right")
    bc.add_point_load(int(right[np.argmax(mesh.nodes[right, 1])]), (0.0, -1.0))
    sol = solve(assemble(mesh, MaterialSet(), bc, tau=tau))
    assert sol.residual < solve_post.RESIDUAL_TOL


def test_unreachable_residual_raises(monkeypatch):
    mesh = _cantilever(n_patches=2)
    system = assemble(mesh, MaterialSet(), _cantilever_bc(mesh), tau=1e10)
    monkeypatch.setattr(solve_post, "RESIDUAL_TOL", 0.0)
    with pytest.raises(SolverFailureError) as info:
        solve(system)
    assert "relative residual" in str(info.value)
    assert info.value.condition_estimate > 1.0


def test_penalty_reduces_interface_jump():
    mesh = _cantilever(n_patches=2)
    bc = _cantilever_bc(mesh)
    jumps = [interface_jump_metric(solve(assemble(mesh, MaterialSet(), bc, tau=tau)), mesh)
             for tau in (0.0, 1e8, 1e10, 1e12)]
    for before, after in zip(jumps, jumps[1:]):
        assert after <= before * (1.0 + 1e-6)
    assert jumps[-1] < jumps[0]


def test_sampled_linear_fields(square_mesh):
    sol = _field(square_mesh, ux=lambda x, y: x, phi=lambda x, y: y)
    points = [(0.1, 0.2), (0.5, 0.5), (0.9, 0.7)]
    state, flux = sample_fields(sol, square_mesh, ELASTIC, points)
    np.testing.assert_allclose(state.eps, np.tile([1.0, 0.0, 0.0], (3, 1)), atol=1e-12)
    np.testing.assert_allclose(state.grad_eps, 0.0, atol=1e-10)
    np.testing.assert_allclose(state.Efield, np.tile([0.0, -1.0], (3, 1)), atol=1e-12)
    assert flux.sigma_hat.shape == (3, 3)
    assert sample_fields(sol, square_mesh, ELASTIC, points)[0] is state


def test_sampled_quadratic_field(square_mesh):
    sol = _field(square_mesh, ux=lambda x, y: x * x, uy=lambda x, y: x * y)
    state, _ = sample_fields(sol, square_mesh, ELASTIC, [(0.3, 0.8)])
    # eps = (2x, x, y); gamma12 = d(x^2)/dy + d(xy)/dx = y
    np.testing.assert_allclose(state.eps[0], [0.6, 0.3, 0.8], atol=1e-9)
    np.testing.assert_allclose(state.grad_eps[0], [2.0, 1.0, 0.0, 0.0, 0.0, 1.0], atol=1e-9)


def test_line_profile(square_mesh):
    sol = _field(square_mesh, ux=lambda x, y: x)
    points, state, _ = line_profile(sol, square_mesh, ELASTIC, (0.0, 0.5), (1.0, 0.5), 5)
    np.testing.assert_allclose(points[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(state.eps[:, 0], 1.0, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        line_profile(sol, square_mesh, ELASTIC, (0.0, 0.5), (1.0, 0.5), 1)


def test_jump_metric(square_mesh, two_square_mesh):
    with pytest.raises(NotApplicableError):
        interface_jump_metric(_field(square_mesh, ux=lambda x, y: x), square_mesh)
    smooth = _field(two_square_mesh, ux=lambda x, y: x * x, phi=lambda x, y: x * y)
    assert interface_jump_metric(smooth, two_square_mesh) < 1e-10
    assert interface_jump_metric(smooth, two_square_mesh, "E2") < 1e-10
    kinked = _field(two_square_mesh, ux=lambda x, y: abs(x - 1.0))
    assert interface_jump_metric(kinked, two_square_mesh) == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(InvalidArgumentError):
        interface_jump_metric(kinked, two_square_mesh, "phi")


def test_energies_need_mechanical_work(square_mesh):
    with pytest.raises(NotApplicableError):
        energies(_field(square_mesh), square_mesh, MaterialSet())


@pytest.mark.parametrize("mode, hprime, expected", [
    ("combined", 2.0, 2.0),
    ("flexo_only", 2.0, math.sqrt(3.0)),
    ("piezo_only", 2.0, 1.0),
    ("combined", 1e6, 1.0),
])
def test_analytical_coupling_factor(mode, hprime, expected):
    mat = MaterialSet()
    t = hprime_thickness(mat, hprime)
    kem, normalized = analytical_kem(mat, t, mode)
    assert normalized == pytest.approx(expected, rel=1e-9)
    assert kem > 0.0


def test_analytical_model_decreases_with_thickness():
    mat = MaterialSet()
    values = [analytical_kem(mat, t)[1] for t in (1e-7, 1e-6, 1e-5)]
    assert values[0] > values[1] > values[2]
    assert hprime_thickness(mat, 2.0) == pytest.approx(2.0 * 1e-6 / 4.4)


def test_analytical_model_arguments():
    with pytest.raises(InvalidArgumentError):
        analytical_kem(MaterialSet(), 0.0)
    with pytest.raises(InvalidArgumentError):
        analytical_kem(MaterialSet(e21=0.0), 1e-6)
    with pytest.raises(InvalidArgumentError):
        hprime_thickness(MaterialSet(mu12=0.0), 2.0)


def test_scalar_diagnostics(two_square_mesh):
    sol = _field(two_square_mesh, uy=lambda x, y: -0.1 * x, phi=lambda x, y: 3.0 * y)
    top = two_square_mesh.boundary_nodes("top")
    bottom = two_square_mesh.boundary_nodes("bottom")
    assert potential_difference(sol, top, bottom, 1.0) == pytest.approx(3.0)
    right = two_square_mesh.boundary_nodes("right")
    assert mean_displacement(sol, right) == pytest.approx(-0.2)
    assert sol.max_displacement == pytest.approx(0.2)
    with pytest.raises(InvalidArgumentError):
        potential_difference(sol, top, bottom, 0.0)
