"""
NURBS patch geometry and multi-patch meshes.

A patch maps the unit parametric square to a physical quadrilateral region.
Meshes merge geometrically coincident control points into shared global nodes
(C0 continuity) and record every interior patch-to-patch edge as an
InterfaceEdge for the interior penalty terms.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import DegenerateGeometryError, InvalidArgumentError, NonconformingInterfaceError, OutOfDomainError
from .spline_kernel import (
    BezierExtraction,
    KnotVector,
    PatchBasisSpec,
    bezier_extract,
    gauss_rule,
    local_indices,
    make_open_knot_vector,
    nurbs_basis_2d,
    rationalize,
    refine_knot_vector,
)

logger = logging.getLogger(__name__)

# Local edge names: the parameter held fixed and its value.
EDGES = ("eta0", "xi1", "eta1", "xi0")
EDGE_SAMPLES = 9


@dataclass(frozen=True, eq=False)
class NurbsPatch:
    """Tensor-product NURBS patch.

    control_points has shape (n_eta, n_xi, 2) and weights (n_eta, n_xi), so
    the flat control-point index is j * n_xi + i with xi fastest.
    """

    spec: PatchBasisSpec
    control_points: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "weights", w)
        n_xi, n_eta = self.spec.shape
        if cp.shape != (n_eta, n_xi, 2) or w.shape != (n_eta, n_xi):
            raise InvalidArgumentError(
                f"control net {cp.shape[:2]} / weights {w.shape} do not match basis ({n_eta}, {n_xi})"
            )
        if np.any(w <= 0.0):
            raise InvalidArgumentError("patch weights must be strictly positive")

    @property
    def n_ctrl(self) -> int:
        n_xi, n_eta = self.spec.shape
        return n_xi * n_eta

    @property
    def flat_points(self) -> np.ndarray:
        return self.control_points.reshape(-1, 2)

    @cached_property
    def extraction(self) -> Tuple[BezierExtraction, BezierExtraction]:
        return bezier_extract(self.spec.kv_xi), bezier_extract(self.spec.kv_eta)

    @property
    def n_elements(self) -> Tuple[int, int]:
        ex, ey = self.extraction
        return ex.n_elements, ey.n_elements

    def edge_indices(self, edge: str) -> np.ndarray:
        """Flat indices of control points on a local edge, in increasing edge parameter."""
        n_xi, n_eta = self.spec.shape
        grid = np.arange(n_xi * n_eta).reshape(n_eta, n_xi)
        return {
            "eta0": grid[0, :],
            "eta1": grid[-1, :],
            "xi0": grid[:, 0],
            "xi1": grid[:, -1],
        }[edge]

    def edge_knots(self, edge: str) -> KnotVector:
        return self.spec.kv_xi if edge.startswith("eta") else self.spec.kv_eta


@dataclass
class MappingDerivs:
    position: np.ndarray
    J: np.ndarray
    detJ: float
    H_geo: np.ndarray


@dataclass
class PhysicalBasis:
    """Basis on the local support with physical derivatives.

    dR: (n, 2) as (d/dx, d/dy); d2R: (n, 3) as (xx, xy, yy).
    """

    R: np.ndarray
    dR: np.ndarray
    d2R: np.ndarray
    indices: np.ndarray
    detJ: float


def bilinear_patch(corners: Sequence[Sequence[float]], degrees: Tuple[int, int] = (3, 3),
                   n_elements: Tuple[int, int] = (1, 1), label: str = "") -> NurbsPatch:
    """Patch for a straight-sided quad given counter-clockwise corners.

    Corners map to (xi, eta) = (0,0), (1,0), (1,1), (0,1). Control points sit
    at the Greville abscissae of the bilinear map, which reproduces it exactly.
    """
    c = np.asarray(corners, dtype=np.float64)
    if c.shape != (4, 2):
        raise InvalidArgumentError("a bilinear patch needs exactly 4 corners")
    p, q = degrees
    kv_xi = make_open_knot_vector(p, p + n_elements[0])
    kv_eta = make_open_knot_vector(q, q + n_elements[1])
    gx = greville(kv_xi)
    gy = greville(kv_eta)
    s, t = np.meshgrid(gx, gy)
    cp = ((1 - s) * (1 - t))[..., None] * c[0] + (s * (1 - t))[..., None] * c[1] \
        + (s * t)[..., None] * c[2] + ((1 - s) * t)[..., None] * c[3]
    patch = NurbsPatch(PatchBasisSpec(kv_xi, kv_eta), cp, np.ones(cp.shape[:2]), label)
    if signed_area(c) <= 0.0 or not is_convex(c):
        raise DegenerateGeometryError(f"patch {label!r} corners are not a convex counter-clockwise quad")
    return patch


def greville(kv: KnotVector) -> np.ndarray:
    p = kv.degree
    k = kv.knots
    return np.array([k[i + 1:i + p + 1].mean() for i in range(kv.n_basis)])


def signed_area(polygon: np.ndarray) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    x, y = np.asarray(polygon, dtype=np.float64).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_convex(polygon: np.ndarray) -> bool:
    pts = np.asarray(polygon, dtype=np.float64)
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = np.max(np.abs(e)) ** 2
    return bool(np.all(cross > 1e-12 * scale))


def refine_patch(patch: NurbsPatch, levels: int) -> NurbsPatch:
    """Uniform midpoint knot insertion in both directions; geometry is unchanged."""
    if levels <= 0:
        return patch
    w = patch.weights[..., None]
    hom = np.concatenate([patch.control_points * w, w], axis=-1)
    kv_eta, hom = refine_knot_vector(patch.spec.kv_eta, hom, levels)
    kv_xi, hom_t = refine_knot_vector(patch.spec.kv_xi, np.swapaxes(hom, 0, 1), levels)
    hom = np.swapaxes(hom_t, 0, 1)
    weights = hom[..., 2]
    return NurbsPatch(PatchBasisSpec(kv_xi, kv_eta), hom[..., :2] / weights[..., None], weights, patch.label)


def _check_param(patch: NurbsPatch, xi: float, eta: float) -> None:
    for kv, v, name in ((patch.spec.kv_xi, xi, "xi"), (patch.spec.kv_eta, eta, "eta")):
        lo, hi = kv.domain
        if not lo - 1e-12 <= v <= hi + 1e-12:
            raise OutOfDomainError(f"{name}={v} outside [{lo}, {hi}]")


def map_point(patch: NurbsPatch, xi: float, eta: float) -> np.ndarray:
    _check_param(patch, xi, eta)
    basis = nurbs_basis_2d(patch.spec, patch.weights, xi, eta, n_derivs=0)
    return basis.R @ patch.flat_points[basis.indices]


def _geometry_from_basis(R, dR, d2R, pts):
    """Position, Jacobian and second derivatives of the map from basis data."""
    position = np.einsum("...n,...nc->...c", R, pts)
    J = np.einsum("...nb,...na->...ab", dR, pts)
    H = np.einsum("...nk,...na->...ak", d2R, pts)
    return position, J, H


def mapping_derivatives(patch: NurbsPatch, xi: float, eta: float) -> MappingDerivs:
    _check_param(patch, xi, eta)
    b = nurbs_basis_2d(patch.spec, patch.weights, xi, eta, n_derivs=2)
    pts = patch.flat_points[b.indices]
    position, J, H = _geometry_from_basis(b.R, b.dR, b.d2R, pts)
    detJ = float(np.linalg.det(J))
    if detJ <= 0.0:
        raise DegenerateGeometryError(f"detJ={detJ:.3e} <= 0 at (xi, eta)=({xi}, {eta}) in patch {patch.label!r}")
    return MappingDerivs(position=position, J=J, detJ=detJ, H_geo=H)


def push_forward(dR: np.ndarray, d2R: np.ndarray, J: np.ndarray, H: np.ndarray):
    """Parametric to physical basis derivatives (full second-order chain rule).

    Shapes: dR (..., n, 2), d2R (..., n, 3), J (..., 2, 2), H (..., 2, 3).
    """
    Jinv = np.linalg.inv(J)
    dRdx = np.einsum("...nb,...ba->...na", dR, Jinv)
    hess = np.stack([
        np.stack([d2R[..., 0], d2R[..., 1]], axis=-1),
        np.stack([d2R[..., 1], d2R[..., 2]], axis=-1),
    ], axis=-2)
    Hfull = np.stack([
        np.stack([H[..., 0], H[..., 1]], axis=-1),
        np.stack([H[..., 1], H[..., 2]], axis=-1),
    ], axis=-2)
    hess = hess - np.einsum("...na,...abc->...nbc", dRdx, Hfull)
    hx = np.einsum("...bd,...nbc,...ce->...nde", Jinv, hess, Jinv)
    d2Rdx = np.stack([hx[..., 0, 0], hx[..., 0, 1], hx[..., 1, 1]], axis=-1)
    return dRdx, d2Rdx


def physical_basis(patch: NurbsPatch, xi: float, eta: float) -> PhysicalBasis:
    _check_param(patch, xi, eta)
    b = nurbs_basis_2d(patch.spec, patch.weights, xi, eta, n_derivs=2)
    pts = patch.flat_points[b.indices]
    _, J, H = _geometry_from_basis(b.R, b.dR, b.d2R, pts)
    detJ = float(np.linalg.det(J))
    if detJ <= 0.0:
        raise DegenerateGeometryError(f"detJ={detJ:.3e} <= 0 in patch {patch.label!r}")
    dRdx, d2Rdx = push_forward(b.dR, b.d2R, J, H)
    return PhysicalBasis(R=b.R, dR=dRdx, d2R=d2Rdx, indices=b.indices, detJ=detJ)


@dataclass
class ElementEval:
    """Physical basis of one element at a tensor grid of quadrature points."""

    indices: np.ndarray
    points: np.ndarray
    R: np.ndarray
    dR: np.ndarray
    d2R: np.ndarray
    detJ: np.ndarray
    weights: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


def element_eval(patch: NurbsPatch, ex: int, ey: int, n_quad: Tuple[int, int]) -> ElementEval:
    """Evaluate the basis on element (ex, ey) with Bezier extraction."""
    ext_x, ext_y = patch.extraction
    gx, gy = gauss_rule(n_quad[0]), gauss_rule(n_quad[1])
    tx, ty = 0.5 * (gx.points + 1.0), 0.5 * (gy.points + 1.0)
    Nx = ext_x.element_basis(ex, tx)
    Ny = ext_y.element_basis(ey, ty)
    nx, ny = len(tx), len(ty)
    Nx_g = Nx[:, np.tile(np.arange(nx), ny)]
    Ny_g = Ny[:, np.repeat(np.arange(ny), nx)]

    p, q = patch.spec.degrees
    sx, sy = int(ext_x.spans[ex]), int(ext_y.spans[ey])
    w_loc = patch.weights[sy - q:sy + 1, sx - p:sx + 1]
    R, dR, d2R = rationalize(Nx_g, Ny_g, w_loc)
    idx = local_indices(patch.spec, sx, sy)
    pts = patch.flat_points[idx]
    position, J, H = _geometry_from_basis(R, dR, d2R, pts[None])
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0.0):
        raise DegenerateGeometryError(f"detJ <= 0 in element ({ex}, {ey}) of patch {patch.label!r}")
    dRdx, d2Rdx = push_forward(dR, d2R, J, H)

    (ax, bx), (ay, by) = ext_x.intervals[ex], ext_y.intervals[ey]
    wq = np.outer(gy.weights, gx.weights).ravel() * 0.25 * (bx - ax) * (by - ay)
    xi = ax + (bx - ax) * tx[np.tile(np.arange(nx), ny)]
    eta = ay + (by - ay) * ty[np.repeat(np.arange(ny), nx)]
    return ElementEval(idx, position, R, dRdx, d2Rdx, detJ, wq * detJ, xi, eta)


def edge_param_to_patch(edge: str, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=np.float64)
    one, zero = np.ones_like(s), np.zeros_like(s)
    return {
        "eta0": (s, zero),
        "eta1": (s, one),
        "xi0": (zero, s),
        "xi1": (one, s),
    }[edge]


def edge_curve(patch: NurbsPatch, edge: str, s: Iterable[float]) -> np.ndarray:
    xi, eta = edge_param_to_patch(edge, np.asarray(list(s), dtype=np.float64))
    return np.array([map_point(patch, a, b) for a, b in zip(xi, eta)])


def edge_frame(patch: NurbsPatch, edge: str, s: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Point, outward unit normal and |dx/ds| on a patch edge."""
    xi, eta = edge_param_to_patch(edge, np.array([s]))
    m = mapping_derivatives(patch, float(xi[0]), float(eta[0]))
    tangent = m.J[:, 0] if edge.startswith("eta") else m.J[:, 1]
    length = float(np.linalg.norm(tangent))
    tx, ty = tangent / length
    if edge in ("eta0", "xi1"):
        normal = np.array([ty, -tx])
    else:
        normal = np.array([-ty, tx])
    return m.position, normal, length


@dataclass
class InterfaceEdge:
    """Interior edge shared by a left and a right patch.

    Quadrature data are stored per point: s_left/s_right are the edge
    parameters on each side, ds the line-integration weights (Gauss weight
    times |dx/ds|), normals_left/right the outward unit normals.
    """

    left: int
    left_edge: str
    right: int
    right_edge: str
    reversed: bool
    h: float
    s_left: np.ndarray = field(repr=False)
    s_right: np.ndarray = field(repr=False)
    ds: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    normals_left: np.ndarray = field(repr=False)
    normals_right: np.ndarray = field(repr=False)

    def orientation(self, s: np.ndarray) -> np.ndarray:
        return 1.0 - s if self.reversed else s


@dataclass
class MultiPatchMesh:
    """Patches with merged global nodes and detected interfaces.

    node_maps[k][a] is the global node of local control point a of patch k.
    DOFs: u_x = 2*node, u_y = 2*node + 1, phi = 2*n_nodes + node.
    """

    patches: List[NurbsPatch]
    node_maps: List[np.ndarray]
    nodes: np.ndarray
    interfaces: List[InterfaceEdge]
    tol: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    def u_dofs(self, nodes: np.ndarray) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=int)
        return np.stack([2 * nodes, 2 * nodes + 1], axis=-1).ravel()

    def phi_dofs(self, nodes: np.ndarray) -> np.ndarray:
        return 2 * self.n_nodes + np.asarray(nodes, dtype=int)

    def elements(self) -> Iterable[Tuple[int, int, int]]:
        for k, patch in enumerate(self.patches):
            n_ex, n_ey = patch.n_elements
            for ey in range(n_ey):
                for ex in range(n_ex):
                    yield k, ex, ey

    @cached_property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.nodes.min(axis=0), self.nodes.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    def boundary_edges(self) -> List[Tuple[int, str]]:
        inner = {(e.left, e.left_edge) for e in self.interfaces} | {(e.right, e.right_edge) for e in self.interfaces}
        return [(k, edge) for k in range(len(self.patches)) for edge in EDGES if (k, edge) not in inner]

    def boundary_nodes(self, side: str, band: float = 0.0) -> np.ndarray:
        """Global nodes on exterior edges within `band` of the extreme coordinate.

        side is one of bottom, top, left, right.
        """
        axis, extreme = {"bottom": (1, "min"), "top": (1, "max"), "left": (0, "min"), "right": (0, "max")}[side]
        lo, hi = self.bounding_box
        tol = max(self.tol, band)
        selected = set()
        for k, edge in self.boundary_edges():
            gnodes = self.node_maps[k][self.patches[k].edge_indices(edge)]
            coords = self.nodes[gnodes, axis]
            if extreme == "min":
                mask = coords <= lo[axis] + tol
            else:
                mask = coords >= hi[axis] - tol
            # a straight edge lying on the surface, or control points inside the band
            if band > 0.0 or np.all(mask):
                selected.update(int(g) for g in gnodes[mask])
        return np.array(sorted(selected), dtype=int)

    def boundary_edge_list(self, side: str) -> List[Tuple[int, str]]:
        """Exterior edges lying entirely on one side of the bounding box."""
        axis, extreme = {"bottom": (1, "min"), "top": (1, "max"), "left": (0, "min"), "right": (0, "max")}[side]
        lo, hi = self.bounding_box
        out = []
        for k, edge in self.boundary_edges():
            coords = self.nodes[self.node_maps[k][self.patches[k].edge_indices(edge)], axis]
            target = lo[axis] if extreme == "min" else hi[axis]
            if np.all(np.abs(coords - target) <= self.tol):
                out.append((k, edge))
        return out

    def locate(self, x: np.ndarray) -> Tuple[int, float, float]:
        """Patch index and parameters of a physical point (Newton inversion)."""
        x = np.asarray(x, dtype=np.float64)
        for k, patch in enumerate(self.patches):
            pts = patch.flat_points
            lo, hi = pts.min(axis=0) - self.tol, pts.max(axis=0) + self.tol
            if np.any(x < lo) or np.any(x > hi):
                continue
            found = invert_map(patch, x, self.tol)
            if found is not None:
                return k, found[0], found[1]
        raise OutOfDomainError(f"point {tuple(x)} is outside every patch")


def invert_map(patch: NurbsPatch, x: np.ndarray, tol: float) -> Optional[Tuple[float, float]]:
    """Newton solve of map_point(xi, eta) = x; None if x is not in the patch."""
    guess = np.array([0.5, 0.5])
    for _ in range(50):
        m = mapping_derivatives(patch, *np.clip(guess, 0.0, 1.0))
        r = m.position - x
        step = np.linalg.solve(m.J, r)
        guess = guess - step
        if np.linalg.norm(step) < 1e-14:
            break
    if np.any(guess < -1e-9) or np.any(guess > 1.0 + 1e-9):
        return None
    guess = np.clip(guess, 0.0, 1.0)
    if np.linalg.norm(map_point(patch, *guess) - x) > max(tol, 1e-12):
        return None
    return float(guess[0]), float(guess[1])


def _project_to_edge(patch: NurbsPatch, edge: str, x: np.ndarray, coarse: np.ndarray) -> Tuple[float, float]:
    """Closest edge parameter to x and the distance, Newton from a coarse sample."""
    s_grid = np.linspace(0.0, 1.0, len(coarse))
    s = float(s_grid[np.argmin(np.linalg.norm(coarse - x, axis=1))])
    for _ in range(30):
        point, _, _ = edge_frame(patch, edge, s)
        xi, eta = edge_param_to_patch(edge, np.array([s]))
        m = mapping_derivatives(patch, float(xi[0]), float(eta[0]))
        tangent = m.J[:, 0] if edge.startswith("eta") else m.J[:, 1]
        step = float(np.dot(point - x, tangent) / np.dot(tangent, tangent))
        s_new = min(max(s - step, 0.0), 1.0)
        if abs(s_new - s) < 1e-14:
            s = s_new
            break
        s = s_new
    point = map_point(patch, *[float(v[0]) for v in edge_param_to_patch(edge, np.array([s]))])
    return s, float(np.linalg.norm(point - x))


def _interface_quadrature(patches: Sequence[NurbsPatch], left: int, le: str, right: int, re: str,
                          rev: bool, n_points: int):
    """Gauss points on the union of the breaks of both edge knot vectors."""
    bl = patches[left].edge_knots(le).breaks()
    br = patches[right].edge_knots(re).breaks()
    br = 1.0 - br[::-1] if rev else br
    breaks = np.unique(np.round(np.concatenate([bl, br]), 14))
    g = gauss_rule(n_points)
    s_left, s_right, ds, points, nl, nr = [], [], [], [], [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        for gp, gw in zip(g.points, g.weights):
            s = a + 0.5 * (b - a) * (gp + 1.0)
            sr = 1.0 - s if rev else s
            xl, n_l, jac = edge_frame(patches[left], le, s)
            _, n_r, _ = edge_frame(patches[right], re, sr)
            s_left.append(s)
            s_right.append(sr)
            ds.append(0.5 * (b - a) * gw * jac)
            points.append(xl)
            nl.append(n_l)
            nr.append(n_r)
    return (np.array(s_left), np.array(s_right), np.array(ds), np.array(points), np.array(nl), np.array(nr))


def _element_size(patch: NurbsPatch) -> float:
    corners = np.array([patch.control_points[0, 0], patch.control_points[0, -1],
                        patch.control_points[-1, -1], patch.control_points[-1, 0]])
    n_ex, n_ey = patch.n_elements
    return float(np.sqrt(abs(signed_area(corners)) / (n_ex * n_ey)))


def _polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each point to a polyline (vectorized over segments)."""
    a, b = polyline[:-1], polyline[1:]
    ab = b - a
    denom = np.maximum(np.einsum("sc,sc->s", ab, ab), 1e-300)
    t = np.clip(np.einsum("psc,sc->ps", points[:, None, :] - a[None], ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(points[:, None, :] - closest, axis=-1), axis=1)


def detect_interfaces(patches: Sequence[NurbsPatch], tol: float) -> List[InterfaceEdge]:
    """Find every pair of coincident patch edges.

    Edges are sampled at EDGE_SAMPLES points; a pair whose samples all lie on
    each other within tol is an interface, a pair that shares only part of
    its length raises NonconformingInterfaceError.
    """
    keys = [(k, e) for k in range(len(patches)) for e in EDGES]
    dense = {key: edge_curve(patches[key[0]], key[1], np.linspace(0.0, 1.0, 2 * EDGE_SAMPLES - 1)) for key in keys}
    samples = {key: pts[::2] for key, pts in dense.items()}
    # deviation of the curve from its sample polyline bounds the prefilter error
    sag = {key: float(np.max(_polyline_distance(pts[1::2], pts[::2]))) for key, pts in dense.items()}
    lo = np.array([samples[key].min(axis=0) for key in keys])
    hi = np.array([samples[key].max(axis=0) for key in keys])
    tree = cKDTree(0.5 * (lo + hi))
    radius = float(np.max(np.linalg.norm(hi - lo, axis=1))) + tol

    interfaces = []
    for ia, ib in sorted(tree.query_pairs(radius)):
        (ka, ea), (kb, eb) = keys[ia], keys[ib]
        if ka == kb:
            continue
        if np.any(lo[ia] > hi[ib] + tol) or np.any(lo[ib] > hi[ia] + tol):
            continue
        sa, sb = samples[keys[ia]], samples[keys[ib]]
        near_ab = _polyline_distance(sa, sb) < tol + sag[keys[ib]]
        near_ba = _polyline_distance(sb, sa) < tol + sag[keys[ia]]
        if np.count_nonzero(near_ab) < 2 and np.count_nonzero(near_ba) < 2:
            continue
        on_b = np.array([_project_to_edge(patches[kb], eb, x, sb)[1] for x in sa]) < tol
        on_a = np.array([_project_to_edge(patches[ka], ea, x, sa)[1] for x in sb]) < tol
        if np.all(on_b) and np.all(on_a):
            rev = bool(np.linalg.norm(sa[0] - sb[0]) > np.linalg.norm(sa[0] - sb[-1]))
            p_max = max(max(patches[ka].spec.degrees), max(patches[kb].spec.degrees))
            quad = _interface_quadrature(patches, ka, ea, kb, eb, rev, p_max + 2)
            h = min(_element_size(patches[ka]), _element_size(patches[kb]))
            interfaces.append(InterfaceEdge(ka, ea, kb, eb, rev, h, *quad))
        elif np.count_nonzero(on_b) >= 2 or np.count_nonzero(on_a) >= 2:
            raise NonconformingInterfaceError(
                f"edge {ea} of patch {ka} and edge {eb} of patch {kb} overlap only partially"
            )
    return interfaces


def merge_nodes(patches: Sequence[NurbsPatch], tol: float) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Identify coincident control points; numbering follows first appearance."""
    points = np.concatenate([p.flat_points for p in patches])
    n = len(points)
    pairs = np.array(sorted(cKDTree(points).query_pairs(tol)), dtype=int).reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # renumber components by first occurrence so numbering is deterministic
    order = {}
    for lab in labels:
        if lab not in order:
            order[lab] = len(order)
    global_ids = np.array([order[lab] for lab in labels], dtype=int)
    nodes = np.zeros((len(order), 2))
    nodes[global_ids] = points
    maps, start = [], 0
    for p in patches:
        maps.append(global_ids[start:start + p.n_ctrl])
        start += p.n_ctrl
    return nodes, maps


def build_mesh(patches: Sequence[NurbsPatch], tol: Optional[float] = None) -> MultiPatchMesh:
    """Merge nodes and detect interfaces for a list of patches."""
    patches = list(patches)
    if not patches:
        raise InvalidArgumentError("a mesh needs at least one patch")
    all_pts = np.concatenate([p.flat_points for p in patches])
    diag = float(np.linalg.norm(all_pts.max(axis=0) - all_pts.min(axis=0)))
    tol = tol if tol is not None else 1e-9 * diag
    nodes, maps = merge_nodes(patches, tol)
    interfaces = detect_interfaces(patches, tol)
    logger.info(f"Built mesh: {len(patches)} patches, {len(nodes)} nodes, {len(interfaces)} interfaces")
    return MultiPatchMesh(patches, maps, nodes, interfaces, tol)


def patch_area(patch: NurbsPatch, n_quad: int = 6) -> float:
    n_ex, n_ey = patch.n_elements
    return float(sum(element_eval(patch, ex, ey, (n_quad, n_quad)).weights.sum()
                     for ey in range(n_ey) for ex in range(n_ex)))


def mesh_area(mesh: MultiPatchMesh) -> float:
    return sum(patch_area(p) for p in mesh.patches)


def refine_patches(patches: Sequence[NurbsPatch], levels: int) -> List[NurbsPatch]:
    return [refine_patch(p, levels) for p in patches]
