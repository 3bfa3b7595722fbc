"""
Stiffness and load assembly for the coupled flexoelectric problem.

Unknowns are ordered [u_x, u_y per node | phi per node]. The assembled
operator is the symmetric saddle matrix

    [[K_uu + K_I_uu,  K_uphi + K_I_uphi],
     [(...)^T,        -K_phiphi        ]]

scaled with beta as [[A, beta*B], [beta*B^T, -beta^2*D]] on the unknowns
[u, phi / beta]. Interior patch edges add the symmetric interior penalty terms
that weakly enforce continuity of the displacement normal derivative.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, bmat

from ..errors import InvalidArgumentError
from ..iga.patch_geometry import (
    EDGES,
    ElementEval,
    InterfaceEdge,
    MultiPatchMesh,
    edge_frame,
    edge_param_to_patch,
    element_eval,
    physical_basis,
)
from ..iga.spline_kernel import gauss_rule
from .flexo_material import MaterialSet

logger = logging.getLogger(__name__)

DEFAULT_BETA = 1e10


@dataclass
class ElementMatrices:
    """Derivative matrices at quadrature points (leading axis = point).

    B_u (2n, 3) and H_u (2n, 6) act on interleaved (u_x, u_y) local DOFs;
    B_phi (n, 2) gives E = -B_phi^T phi; H_phi (n, 4) holds (xx, xy, yx, yy)
    second derivatives of the potential basis.
    """

    B_u: np.ndarray
    H_u: np.ndarray
    B_phi: np.ndarray
    H_phi: np.ndarray


@dataclass
class ElementBlock:
    K_uu: np.ndarray
    K_uphi: np.ndarray
    K_phiphi: np.ndarray


def element_matrices(dR: np.ndarray, d2R: np.ndarray) -> ElementMatrices:
    """Build B_u, H_u, B_phi, H_phi from physical first (…, n, 2) and second (…, n, 3) derivatives."""
    dR = np.asarray(dR, dtype=np.float64)
    d2R = np.asarray(d2R, dtype=np.float64)
    lead = dR.shape[:-2]
    n = dR.shape[-2]
    Rx, Ry = dR[..., 0], dR[..., 1]
    Rxx, Rxy, Ryy = d2R[..., 0], d2R[..., 1], d2R[..., 2]

    B_u = np.zeros(lead + (2 * n, 3))
    B_u[..., 0::2, 0] = Rx
    B_u[..., 0::2, 2] = Ry
    B_u[..., 1::2, 1] = Ry
    B_u[..., 1::2, 2] = Rx

    H_u = np.zeros(lead + (2 * n, 6))
    H_u[..., 0::2, 0] = Rxx
    H_u[..., 0::2, 2] = Rxy
    H_u[..., 0::2, 3] = Rxy
    H_u[..., 0::2, 5] = Ryy
    H_u[..., 1::2, 1] = Rxy
    H_u[..., 1::2, 2] = Rxx
    H_u[..., 1::2, 4] = Ryy
    H_u[..., 1::2, 5] = Rxy

    H_phi = np.stack([Rxx, Rxy, Rxy, Ryy], axis=-1)
    return ElementMatrices(B_u=B_u, H_u=H_u, B_phi=dR.copy(), H_phi=H_phi)


def _weighted_gram(w, A, M, B):
    """sum_q w_q A_q M B_q^T."""
    return np.einsum("q,qai,qbi->ab", w, A @ M, B)


def element_block(ev: ElementEval, mat: MaterialSet) -> ElementBlock:
    """Volume stiffness blocks of one element; K_uphi is (2n, n) with K_phiu = K_uphi^T."""
    em = element_matrices(ev.dR, ev.d2R)
    w = ev.weights
    K_uu = _weighted_gram(w, em.B_u, mat.C, em.B_u) + _weighted_gram(w, em.H_u, mat.h, em.H_u)
    coupling = em.B_u @ mat.e.T + em.H_u @ mat.mu.T
    K_uphi = np.einsum("q,qai,qbi->ab", w, coupling, em.B_phi)
    K_phiphi = _weighted_gram(w, em.B_phi, mat.kappa, em.B_phi)
    return ElementBlock(K_uu=K_uu, K_uphi=K_uphi, K_phiphi=K_phiphi)


def default_quadrature(mesh: MultiPatchMesh, k: int) -> Tuple[int, int]:
    p, q = mesh.patches[k].spec.degrees
    return p + 1, q + 1


# --- boundary conditions -------------------------------------------------


@dataclass
class EdgeLoad:
    """Constant load density on a patch edge: traction (2,), double traction (2,) or charge (1,)."""

    patch: int
    edge: str
    value: np.ndarray


@dataclass
class BoundarySpec:
    """Dirichlet, Neumann, point and equipotential data in global numbering.

    u_fixed maps mechanical DOF -> displacement (m); phi_fixed maps node ->
    potential (V); point_loads maps node -> force (N/m). Every DOF may be
    constrained at most once.
    """

    u_fixed: Dict[int, float] = field(default_factory=dict)
    phi_fixed: Dict[int, float] = field(default_factory=dict)
    equipotential: List[np.ndarray] = field(default_factory=list)
    point_loads: Dict[int, np.ndarray] = field(default_factory=dict)
    tractions: List[EdgeLoad] = field(default_factory=list)
    double_tractions: List[EdgeLoad] = field(default_factory=list)
    charges: List[EdgeLoad] = field(default_factory=list)
    body_force: Optional[np.ndarray] = None
    volume_charge: float = 0.0

    def fix_displacement(self, nodes: Sequence[int], components: Sequence[int] = (0, 1), value: float = 0.0):
        for node in np.asarray(nodes, dtype=int):
            for c in components:
                dof = 2 * int(node) + int(c)
                if dof in self.u_fixed and self.u_fixed[dof] != value:
                    raise InvalidArgumentError(f"DOF {dof} is already fixed to {self.u_fixed[dof]}")
                self.u_fixed[dof] = float(value)
        return self

    def fix_potential(self, nodes: Sequence[int], value: float):
        for node in np.asarray(nodes, dtype=int):
            node = int(node)
            if node in self.phi_fixed and self.phi_fixed[node] != value:
                raise InvalidArgumentError(f"potential of node {node} is already fixed to {self.phi_fixed[node]}")
            self.phi_fixed[node] = float(value)
        return self

    def tie_potential(self, nodes: Sequence[int]):
        group = np.unique(np.asarray(nodes, dtype=int))
        if len(group) > 1:
            self.equipotential.append(group)
        return self

    def add_point_load(self, node: int, force: Sequence[float]):
        f = np.asarray(force, dtype=np.float64)
        self.point_loads[int(node)] = self.point_loads.get(int(node), np.zeros(2)) + f
        return self

    def add_traction(self, edges: Sequence[Tuple[int, str]], traction: Sequence[float]):
        for k, edge in edges:
            self.tractions.append(EdgeLoad(k, edge, np.asarray(traction, dtype=np.float64)))
        return self

    def add_double_traction(self, edges: Sequence[Tuple[int, str]], double_traction: Sequence[float]):
        for k, edge in edges:
            self.double_tractions.append(EdgeLoad(k, edge, np.asarray(double_traction, dtype=np.float64)))
        return self

    def add_charge(self, edges: Sequence[Tuple[int, str]], density: float):
        for k, edge in edges:
            self.charges.append(EdgeLoad(k, edge, np.array([float(density)])))
        return self


def edge_quadrature(mesh: MultiPatchMesh, k: int, edge: str, n_points: Optional[int] = None):
    """Gauss points on a patch edge as (xi, eta, s, weight), one rule per knot span."""
    patch = mesh.patches[k]
    breaks = patch.edge_knots(edge).breaks()
    n_points = n_points or max(patch.spec.degrees) + 2
    g = gauss_rule(n_points)
    s, w = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        s.extend(a + 0.5 * (b - a) * (g.points + 1.0))
        w.extend(0.5 * (b - a) * g.weights)
    xi, eta = edge_param_to_patch(edge, np.array(s))
    return xi, eta, np.array(s), np.array(w)


def _check_boundary_edge(mesh: MultiPatchMesh, load: EdgeLoad, exterior: set) -> None:
    if not 0 <= load.patch < len(mesh.patches) or load.edge not in EDGES:
        raise InvalidArgumentError(f"load on nonexistent edge {load.edge!r} of patch {load.patch}")
    if (load.patch, load.edge) not in exterior:
        raise InvalidArgumentError(f"edge {load.edge!r} of patch {load.patch} is not on the boundary")


def load_vector(mesh: MultiPatchMesh, bc: BoundarySpec) -> Tuple[np.ndarray, np.ndarray]:
    """Unscaled load vectors (F_u of length 2N, F_phi of length N)."""
    N = mesh.n_nodes
    F_u = np.zeros(2 * N)
    F_phi = np.zeros(N)
    exterior = set(mesh.boundary_edges())

    for node, force in bc.point_loads.items():
        if not 0 <= node < N:
            raise InvalidArgumentError(f"point load on nonexistent node {node}")
        F_u[2 * node:2 * node + 2] += force

    for load in bc.tractions + bc.double_tractions + bc.charges:
        _check_boundary_edge(mesh, load, exterior)

    for kind, loads in (("t", bc.tractions), ("r", bc.double_tractions), ("w", bc.charges)):
        for load in loads:
            patch = mesh.patches[load.patch]
            gmap = mesh.node_maps[load.patch]
            for xi, eta, s, w in zip(*edge_quadrature(mesh, load.patch, load.edge)):
                _, normal, jac = edge_frame(patch, load.edge, float(s))
                pb = physical_basis(patch, float(xi), float(eta))
                nodes = gmap[pb.indices]
                ds = w * jac
                if kind == "t":
                    np.add.at(F_u, 2 * nodes, ds * pb.R * load.value[0])
                    np.add.at(F_u, 2 * nodes + 1, ds * pb.R * load.value[1])
                elif kind == "r":
                    dn = pb.dR @ normal
                    np.add.at(F_u, 2 * nodes, ds * dn * load.value[0])
                    np.add.at(F_u, 2 * nodes + 1, ds * dn * load.value[1])
                else:
                    # enthalpy sign convention for the electrical row
                    np.add.at(F_phi, nodes, -ds * pb.R * load.value[0])

    if bc.body_force is not None or bc.volume_charge:
        b = np.zeros(2) if bc.body_force is None else np.asarray(bc.body_force, dtype=np.float64)
        for k, ex, ey in mesh.elements():
            ev = element_eval(mesh.patches[k], ex, ey, default_quadrature(mesh, k))
            nodes = mesh.node_maps[k][ev.indices]
            Rw = ev.weights @ ev.R
            np.add.at(F_u, 2 * nodes, Rw * b[0])
            np.add.at(F_u, 2 * nodes + 1, Rw * b[1])
            np.add.at(F_phi, nodes, -Rw * bc.volume_charge)
    return F_u, F_phi


# --- interior penalty interface terms ------------------------------------


def jump_average(values_L, values_R, normals=None):
    """Jump and average of two one-sided quantities.

    With normals=(n_L, n_R) the values are gradients (…, 2) and the jump is
    grad_L . n_L + grad_R . n_R; otherwise jump = a_L + a_R.
    """
    vl = np.asarray(values_L, dtype=np.float64)
    vr = np.asarray(values_R, dtype=np.float64)
    if normals is not None:
        nl, nr = (np.asarray(n, dtype=np.float64) for n in normals)
        vl = np.einsum("...i,...i->...", vl, nl)
        vr = np.einsum("...i,...i->...", vr, nr)
    return vl + vr, 0.5 * (vl + vr)


def stabilization_tau(alpha: float, E: float, L: float, h: float) -> float:
    if h <= 0.0:
        raise InvalidArgumentError(f"element size must be positive, got {h}")
    return alpha * E * L ** 2 / h


def double_traction_operator(n: np.ndarray) -> np.ndarray:
    """N(n) with r = N(n) sigma_tilde; quadratic in n, so r(n) = r(-n)."""
    n = np.asarray(n, dtype=np.float64)
    n1, n2 = n[..., 0], n[..., 1]
    N = np.zeros(n.shape[:-1] + (2, 6))
    N[..., 0, 0] = n1 * n1
    N[..., 0, 2] = n1 * n2
    N[..., 0, 3] = n1 * n2
    N[..., 0, 5] = n2 * n2
    N[..., 1, 1] = n1 * n2
    N[..., 1, 2] = n1 * n1
    N[..., 1, 4] = n2 * n2
    N[..., 1, 5] = n1 * n2
    return N


@dataclass
class InterfaceBlock:
    """Interface contribution on the union of both sides' support nodes."""

    nodes: np.ndarray
    K_uu: np.ndarray
    K_penalty: np.ndarray
    K_uphi: np.ndarray
    tau: float


def _side_operators(mesh: MultiPatchMesh, k: int, edge: str, s: float):
    xi, eta = edge_param_to_patch(edge, np.array([s]))
    pb = physical_basis(mesh.patches[k], float(xi[0]), float(eta[0]))
    em = element_matrices(pb.dR, pb.d2R)
    return mesh.node_maps[k][pb.indices], pb.dR, em


def interface_block(mesh: MultiPatchMesh, iface: InterfaceEdge, mat: MaterialSet, tau: float) -> InterfaceBlock:
    """Symmetric interior penalty terms of one interface edge.

    K_uu = sum w [-(Jn^T Ru + Ru^T Jn) + tau Jn^T Jn], K_uphi = sum w [-Jn^T Rphi],
    with Jn the normal-derivative jump operator and Ru/Rphi the averaged
    double traction in terms of u and phi.
    """
    if tau < 0.0:
        raise InvalidArgumentError(f"tau must be non-negative, got {tau}")
    h, mu = mat.h, mat.mu
    points = []
    for q in range(len(iface.ds)):
        left = _side_operators(mesh, iface.left, iface.left_edge, iface.s_left[q])
        right = _side_operators(mesh, iface.right, iface.right_edge, iface.s_right[q])
        points.append((left, right))

    # union of the support nodes of both element layers, first-appearance order
    order: Dict[int, int] = {}
    for left, right in points:
        for g in np.concatenate([left[0], right[0]]):
            order.setdefault(int(g), len(order))
    nodes = np.fromiter(order, dtype=int, count=len(order))
    m = len(nodes)
    K_cons = np.zeros((2 * m, 2 * m))
    K_pen = np.zeros((2 * m, 2 * m))
    K_uphi = np.zeros((2 * m, m))
    everything = slice(None)

    for q, ((gl, dRl, eml), (gr, dRr, emr)) in enumerate(points):
        nL, nR = iface.normals_left[q], iface.normals_right[q]
        N = double_traction_operator(nL)
        Jn = np.zeros((2, 2 * m))
        Ru = np.zeros((2, 2 * m))
        Rphi = np.zeros((2, m))
        for g, dR, em, normal in ((gl, dRl, eml, nL), (gr, dRr, emr, nR)):
            loc = np.array([order[int(a)] for a in g])
            dn = dR @ normal
            np.add.at(Jn[0], 2 * loc, dn)
            np.add.at(Jn[1], 2 * loc + 1, dn)
            np.add.at(Ru, (everything, _interleave(loc)), 0.5 * N @ h @ em.H_u.T)
            np.add.at(Rphi, (everything, loc), 0.5 * N @ mu.T @ em.B_phi.T)
        w = iface.ds[q]
        K_cons -= w * (Jn.T @ Ru + Ru.T @ Jn)
        K_pen += w * tau * (Jn.T @ Jn)
        K_uphi -= w * (Jn.T @ Rphi)
    return InterfaceBlock(nodes=nodes, K_uu=K_cons + K_pen, K_penalty=K_pen, K_uphi=K_uphi, tau=tau)


def interface_tau(iface: InterfaceEdge, mat: MaterialSet, tau: Optional[float], alpha: Optional[float]) -> float:
    """Direct tau wins over alpha; neither gives 0."""
    if tau is not None:
        return float(tau)
    if alpha is not None:
        return stabilization_tau(alpha, mat.E, mat.L, iface.h)
    return 0.0


# --- global system ---------------------------------------------------------


def _interleave(nodes: np.ndarray) -> np.ndarray:
    return np.stack([2 * nodes, 2 * nodes + 1], axis=-1).ravel()


class _Triplets:
    """COO accumulator; duplicate entries are summed on conversion."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, block):
        r, c = np.meshgrid(rows, cols, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(np.asarray(block).ravel())

    def tocsr(self, shape) -> csr_matrix:
        if not self.vals:
            return csr_matrix(shape)
        return coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape
        ).tocsr()


@dataclass
class ConstraintMap:
    """U_full = T @ U_red + U_fixed (in scaled unknowns [u, phi / beta])."""

    T: csr_matrix
    U_fixed: np.ndarray
    fixed: np.ndarray
    masters: np.ndarray


def build_constraints(mesh: MultiPatchMesh, bc: BoundarySpec, beta: float) -> ConstraintMap:
    N = mesh.n_nodes
    n = mesh.n_dofs
    is_fixed = np.zeros(n, dtype=bool)
    U_fixed = np.zeros(n)
    for dof, value in bc.u_fixed.items():
        if not 0 <= dof < 2 * N:
            raise InvalidArgumentError(f"Dirichlet DOF {dof} does not exist")
        is_fixed[dof] = True
        U_fixed[dof] = value
    for node, value in bc.phi_fixed.items():
        if not 0 <= node < N:
            raise InvalidArgumentError(f"potential on nonexistent node {node}")
        is_fixed[2 * N + node] = True
        U_fixed[2 * N + node] = value / beta

    master = np.arange(n)
    grouped = np.zeros(n, dtype=bool)
    for group in bc.equipotential:
        dofs = 2 * N + np.asarray(group, dtype=int)
        if np.any(is_fixed[dofs]):
            raise InvalidArgumentError("over-constrained DOF: potential is both prescribed and tied")
        if np.any(grouped[dofs]):
            raise InvalidArgumentError("over-constrained DOF: node belongs to two equipotential groups")
        grouped[dofs] = True
        master[dofs] = dofs.min()

    masters = np.flatnonzero(~is_fixed & (master == np.arange(n)))
    column = np.full(n, -1)
    column[masters] = np.arange(len(masters))
    rows = np.flatnonzero(~is_fixed)
    T = coo_matrix((np.ones(len(rows)), (rows, column[master[rows]])), shape=(n, len(masters))).tocsr()
    return ConstraintMap(T=T, U_fixed=U_fixed, fixed=np.flatnonzero(is_fixed), masters=masters)


@dataclass
class CoupledSystem:
    """Assembled blocks, loads, beta scaling and constraints."""

    K_uu: csr_matrix
    K_uphi: csr_matrix
    K_phiphi: csr_matrix
    K_I_uu: csr_matrix
    K_I_penalty: csr_matrix
    K_I_uphi: csr_matrix
    F_u: np.ndarray
    F_phi: np.ndarray
    beta: float
    constraints: ConstraintMap
    n_nodes: int
    interface_taus: List[float] = field(default_factory=list)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def n_free(self) -> int:
        return self.constraints.T.shape[1]

    @property
    def K_phiu(self) -> csr_matrix:
        return self.K_uphi.T.tocsr()

    def full_matrix(self, scaled: bool = True) -> csr_matrix:
        b = self.beta if scaled else 1.0
        A = self.K_uu + self.K_I_uu
        B = self.K_uphi + self.K_I_uphi
        return bmat([[A, b * B], [b * B.T, -(b ** 2) * self.K_phiphi]], format="csr")

    def rhs(self, scaled: bool = True) -> np.ndarray:
        b = self.beta if scaled else 1.0
        return np.concatenate([self.F_u, b * self.F_phi])

    def reduced(self) -> Tuple[csr_matrix, np.ndarray]:
        K = self.full_matrix()
        T = self.constraints.T
        F = self.rhs() - K @ self.constraints.U_fixed
        return (T.T @ K @ T).tocsr(), T.T @ F

    def expand(self, U_red: np.ndarray) -> np.ndarray:
        """Full scaled vector [u, phi / beta] from reduced unknowns."""
        return self.constraints.T @ U_red + self.constraints.U_fixed


def assemble(mesh: MultiPatchMesh, mat: MaterialSet, bc: BoundarySpec, tau: Optional[float] = None,
             beta: float = DEFAULT_BETA, alpha: Optional[float] = None, dg: bool = True) -> CoupledSystem:
    """Assemble volume and interface blocks, loads and constraints."""
    if beta <= 0.0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    if tau is not None and tau < 0.0:
        raise InvalidArgumentError(f"tau must be non-negative, got {tau}")
    N = mesh.n_nodes
    uu, uphi, phiphi = _Triplets(), _Triplets(), _Triplets()
    for k, ex, ey in mesh.elements():
        ev = element_eval(mesh.patches[k], ex, ey, default_quadrature(mesh, k))
        nodes = mesh.node_maps[k][ev.indices]
        udofs = _interleave(nodes)
        blk = element_block(ev, mat)
        uu.add(udofs, udofs, blk.K_uu)
        uphi.add(udofs, nodes, blk.K_uphi)
        phiphi.add(nodes, nodes, blk.K_phiphi)

    iu, ipen, iuphi = _Triplets(), _Triplets(), _Triplets()
    taus = []
    if dg:
        for iface in mesh.interfaces:
            t = interface_tau(iface, mat, tau, alpha)
            blk = interface_block(mesh, iface, mat, t)
            udofs = _interleave(blk.nodes)
            iu.add(udofs, udofs, blk.K_uu)
            ipen.add(udofs, udofs, blk.K_penalty)
            iuphi.add(udofs, blk.nodes, blk.K_uphi)
            taus.append(t)

    F_u, F_phi = load_vector(mesh, bc)
    system = CoupledSystem(
        K_uu=uu.tocsr((2 * N, 2 * N)),
        K_uphi=uphi.tocsr((2 * N, N)),
        K_phiphi=phiphi.tocsr((N, N)),
        K_I_uu=iu.tocsr((2 * N, 2 * N)),
        K_I_penalty=ipen.tocsr((2 * N, 2 * N)),
        K_I_uphi=iuphi.tocsr((2 * N, N)),
        F_u=F_u,
        F_phi=F_phi,
        beta=float(beta),
        constraints=build_constraints(mesh, bc, beta),
        n_nodes=N,
        interface_taus=taus,
    )
    logger.info(
        f"Assembled system: {system.n_dofs} DOFs ({system.n_free} free), "
        f"{len(taus)} DG interfaces, beta={beta:.1e}"
    )
    return system
