"""
Linear solve and post-processing: field sampling, interface jumps, energies,
coupling factors and the beam-theory reference model.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import LinearOperator, norm as sparse_norm, onenormest, splu

from ..errors import InvalidArgumentError, NotApplicableError, SolverFailureError
from ..iga.patch_geometry import MultiPatchMesh, edge_param_to_patch, element_eval, physical_basis
from .fe_assembly import CoupledSystem, default_quadrature, element_matrices
from .flexo_material import CouplingMode, MaterialSet, PointFlux, PointState, constitutive

logger = logging.getLogger(__name__)

BACKWARD_ERROR_TOL = 1e-9
RESIDUAL_TOL = 1e-9
MAX_REFINEMENT_STEPS = 10
DENSE_CONDITION_LIMIT = 3000

JumpQuantity = Literal["eps11", "E2"]


@dataclass
class SolutionField:
    """Displacements (N, 2) in m and potential (N,) in V at the global nodes."""

    u: np.ndarray
    phi: np.ndarray
    beta: float
    residual: float
    n_dofs: int
    n_free: int
    cache: Dict[bytes, Tuple[PointState, PointFlux]] = field(default_factory=dict, repr=False)

    @property
    def max_displacement(self) -> float:
        return float(np.max(np.linalg.norm(self.u, axis=1))) if len(self.u) else 0.0


@dataclass
class EnergyReport:
    W_mech: float
    W_elec: float
    K_EM: float
    K_EM_normalized: Optional[float] = None


def _condition_estimate(K: csr_matrix, lu=None) -> float:
    n = K.shape[0]
    if n <= DENSE_CONDITION_LIMIT:
        return float(np.linalg.cond(K.toarray(), 1))
    if lu is None:
        return math.inf
    inverse = LinearOperator(K.shape, matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"), dtype=np.float64)
    return float(onenormest(K) * onenormest(inverse))


def solve(system: CoupledSystem) -> SolutionField:
    """
    Direct sparse LU solve of the constrained, beta-scaled system.

    The LU solution is improved by mixed-precision iterative refinement: the
    iterate and its residual are kept in extended precision while corrections
    come from the double-precision factors. Refinement stops once the relative
    residual is below RESIDUAL_TOL; a solve that is still above it after
    MAX_REFINEMENT_STEPS raises SolverFailureError with a condition estimate.
    """
    K, F = system.reduced()
    n_free = K.shape[0]
    f_norm = float(np.linalg.norm(F))
    residual = 0.0
    if n_free == 0:
        U_red = np.zeros(0)
    else:
        try:
            lu = splu(K.tocsc())
            U_red = lu.solve(F)
        except RuntimeError as e:
            raise SolverFailureError(f"Factorization failed: {e}", _condition_estimate(K)) from e

        # penalty blocks make |K||U| >> |F|; the iterate is carried in extended precision
        K_ext = K.astype(np.longdouble)
        F_ext = F.astype(np.longdouble)
        U_ext = U_red.astype(np.longdouble)
        steps = 0
        while True:
            r = (K_ext @ U_ext - F_ext).astype(np.float64)
            r_norm = float(np.linalg.norm(r))
            residual = r_norm / f_norm if f_norm > 0.0 else r_norm
            if not np.all(np.isfinite(r)) or residual < RESIDUAL_TOL or steps == MAX_REFINEMENT_STEPS:
                break
            U_ext -= lu.solve(r)
            steps += 1
        U_red = U_ext.astype(np.float64)
        logger.debug(f"Iterative refinement: {steps} step(s), relative residual {residual:.2e}")

        scale = float(sparse_norm(K, np.inf)) * float(np.linalg.norm(U_red, np.inf)) + float(np.linalg.norm(F, np.inf))
        backward = float(np.linalg.norm(r, np.inf)) / scale if scale > 0.0 else 0.0
        if not np.all(np.isfinite(U_red)) or backward > BACKWARD_ERROR_TOL or not residual < RESIDUAL_TOL:
            cond = _condition_estimate(K, lu)
            raise SolverFailureError(
                f"Solve is inaccurate: relative residual {residual:.2e}, backward error {backward:.2e}, "
                f"condition estimate {cond:.2e}",
                cond,
            )

    U = system.expand(U_red)
    N = system.n_nodes
    logger.info(f"Solved {n_free} unknowns, relative residual {residual:.2e}")
    return SolutionField(
        u=U[:2 * N].reshape(N, 2),
        phi=U[2 * N:] * system.beta,
        beta=system.beta,
        residual=residual,
        n_dofs=system.n_dofs,
        n_free=n_free,
    )


# --- sampling -----------------------------------------------------------------


def _state_from_basis(sol: SolutionField, nodes: np.ndarray, dR: np.ndarray, d2R: np.ndarray) -> PointState:
    em = element_matrices(dR, d2R)
    u_loc = sol.u[nodes].ravel()
    phi_loc = sol.phi[nodes]
    eps = np.einsum("...ai,a->...i", em.B_u, u_loc)
    grad_eps = np.einsum("...ai,a->...i", em.H_u, u_loc)
    Efield = -np.einsum("...ai,a->...i", em.B_phi, phi_loc)
    return PointState(eps, grad_eps, Efield)


def point_values(sol: SolutionField, mesh: MultiPatchMesh, k: int, xi: float,
                 eta: float) -> Tuple[np.ndarray, float, PointState]:
    """Displacement, potential and kinematic state at parameters of patch k."""
    pb = physical_basis(mesh.patches[k], xi, eta)
    nodes = mesh.node_maps[k][pb.indices]
    return pb.R @ sol.u[nodes], float(pb.R @ sol.phi[nodes]), _state_from_basis(sol, nodes, pb.dR, pb.d2R)


def state_at(sol: SolutionField, mesh: MultiPatchMesh, k: int, xi: float, eta: float) -> PointState:
    return point_values(sol, mesh, k, xi, eta)[2]


def sample_fields(sol: SolutionField, mesh: MultiPatchMesh, mat: MaterialSet,
                  points: Sequence[Sequence[float]]) -> Tuple[PointState, PointFlux]:
    """Strain, strain gradient, field and fluxes at physical points (leading axis = point)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    key = pts.tobytes()
    if key in sol.cache:
        return sol.cache[key]
    states = [state_at(sol, mesh, *mesh.locate(x)) for x in pts]
    state = PointState(
        np.array([s.eps for s in states]),
        np.array([s.grad_eps for s in states]),
        np.array([s.Efield for s in states]),
    )
    result = (state, constitutive(state, mat))
    sol.cache[key] = result
    return result


def line_profile(sol: SolutionField, mesh: MultiPatchMesh, mat: MaterialSet, start: Sequence[float],
                 end: Sequence[float], n_samples: int) -> Tuple[np.ndarray, PointState, PointFlux]:
    """Fields sampled at n_samples equally spaced points from start to end."""
    if n_samples < 2:
        raise InvalidArgumentError("a profile needs at least 2 samples")
    t = np.linspace(0.0, 1.0, n_samples)[:, None]
    points = (1.0 - t) * np.asarray(start, dtype=float) + t * np.asarray(end, dtype=float)
    state, flux = sample_fields(sol, mesh, mat, points)
    return points, state, flux


def _quantity(state: PointState, quantity: JumpQuantity) -> np.ndarray:
    if quantity == "eps11":
        return state.eps[..., 0]
    if quantity == "E2":
        return state.Efield[..., 1]
    raise InvalidArgumentError(f"unknown jump quantity {quantity!r}")


def _element_states(sol: SolutionField, mesh: MultiPatchMesh):
    for k, ex, ey in mesh.elements():
        ev = element_eval(mesh.patches[k], ex, ey, default_quadrature(mesh, k))
        yield ev, _state_from_basis(sol, mesh.node_maps[k][ev.indices], ev.dR, ev.d2R)


def interface_jump_metric(sol: SolutionField, mesh: MultiPatchMesh, quantity: JumpQuantity = "eps11") -> float:
    """Max interface jump of a field quantity over its max magnitude in the domain."""
    if not mesh.interfaces:
        raise NotApplicableError("the mesh has no patch interfaces")
    max_jump = 0.0
    max_value = 0.0
    for iface in mesh.interfaces:
        xl, yl = edge_param_to_patch(iface.left_edge, iface.s_left)
        xr, yr = edge_param_to_patch(iface.right_edge, iface.s_right)
        for q in range(len(iface.ds)):
            a = float(_quantity(state_at(sol, mesh, iface.left, float(xl[q]), float(yl[q])), quantity))
            b = float(_quantity(state_at(sol, mesh, iface.right, float(xr[q]), float(yr[q])), quantity))
            max_jump = max(max_jump, abs(a - b))
            max_value = max(max_value, abs(a), abs(b))
    for _, state in _element_states(sol, mesh):
        max_value = max(max_value, float(np.max(np.abs(_quantity(state, quantity)))))
    if max_value == 0.0:
        return 0.0
    return max_jump / max_value


def energies(sol: SolutionField, mesh: MultiPatchMesh, mat: MaterialSet) -> EnergyReport:
    """Mechanical and electrical energies per unit depth and K_EM = sqrt(W_elec / W_mech)."""
    W_mech = 0.0
    W_elec = 0.0
    kappa = mat.kappa
    for ev, state in _element_states(sol, mesh):
        flux = constitutive(state, mat)
        mech = np.einsum("qi,qi->q", state.eps, flux.sigma_hat) + np.einsum("qi,qi->q", state.grad_eps, flux.sigma_tilde)
        elec = np.einsum("qi,ij,qj->q", state.Efield, kappa, state.Efield)
        W_mech += 0.5 * float(ev.weights @ mech)
        W_elec += 0.5 * float(ev.weights @ elec)
    if W_mech <= 0.0:
        raise NotApplicableError(f"coupling factor is undefined for W_mech = {W_mech:.3e}")
    return EnergyReport(W_mech=W_mech, W_elec=W_elec, K_EM=math.sqrt(max(W_elec, 0.0) / W_mech))


def external_work(sol: SolutionField, system: CoupledSystem) -> float:
    """Half the work of the applied nodal forces, 0.5 * F_u . u."""
    return 0.5 * float(system.F_u @ sol.u.ravel())


# --- beam-theory reference ----------------------------------------------------


def hprime_thickness(mat: MaterialSet, hprime: float) -> float:
    """Beam thickness for a normalized thickness h' = -e t / mu."""
    if mat.e21 == 0.0 or mat.mu12 == 0.0:
        raise InvalidArgumentError("normalized thickness needs nonzero e21 and mu12")
    return hprime * mat.mu12 / (-mat.e21)


def analytical_kem(mat: MaterialSet, t: float, mode: CouplingMode = "combined") -> Tuple[float, float]:
    """Beam coupling factor and its value normalized by the piezoelectric-only beam.

    Uses kappa = kappa22, e = e21, mu = mu12 and the dimensionally consistent
    squared flexoelectric term 12 (mu / t)^2.
    """
    if t <= 0.0:
        raise InvalidArgumentError(f"thickness must be positive, got {t}")
    kappa, e, mu = mat.kappa22, mat.e21, mat.mu12
    if e == 0.0:
        raise InvalidArgumentError("normalization needs a piezoelectric reference (e21 != 0)")
    chi = kappa + 1.0
    prefactor = chi / (1.0 + chi) * math.sqrt(kappa / mat.E)
    terms = {
        "combined": e ** 2 + 12.0 * (mu / t) ** 2,
        "flexo_only": 12.0 * (mu / t) ** 2,
        "piezo_only": e ** 2,
    }
    if mode not in terms:
        raise InvalidArgumentError(f"unknown coupling mode {mode!r}")
    kem = prefactor * math.sqrt(terms[mode])
    reference = prefactor * abs(e)
    return kem, kem / reference


# --- scalar diagnostics ----------------------------------------------------------


def potential_difference(sol: SolutionField, top_nodes: np.ndarray, bottom_nodes: np.ndarray, height: float) -> float:
    """(mean phi_top - mean phi_bottom) / height in V/m."""
    if height <= 0.0:
        raise InvalidArgumentError("height must be positive")
    if len(top_nodes) == 0 or len(bottom_nodes) == 0:
        raise InvalidArgumentError("potential difference needs top and bottom nodes")
    return float(np.mean(sol.phi[top_nodes]) - np.mean(sol.phi[bottom_nodes])) / height


def mean_displacement(sol: SolutionField, nodes: np.ndarray, component: int = 1) -> float:
    return float(np.mean(sol.u[np.asarray(nodes, dtype=int), component]))
