"""
Truss-lattice geometry generators.

Each strut is two straight-sided patches split along its midline. At a joint
the half-patches are cut along the bisector between angularly adjacent
struts, so neighbouring struts tile the joint without overlap and share whole
edges (conforming interfaces). Nodes on a clipping wall (top/bottom surface
of the specimen) cut the adjacent halves along the wall instead.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DegenerateGeometryError, InvalidArgumentError
from .patch_geometry import MultiPatchMesh, NurbsPatch, bilinear_patch, build_mesh, is_convex, refine_patches, signed_area

logger = logging.getLogger(__name__)

TOPOLOGY_IDS = ("UC1", "UC2", "UC3", "UC4", "SOLID")


@dataclass(frozen=True, eq=False)
class TopologyDef:
    """Unit-cell graph in normalized cell coordinates [0,1]^2.

    clip_y cuts struts meeting the bottom/top cell lines flat so the specimen
    has planar electrode/support surfaces.
    """

    nodes: Tuple[Tuple[float, float], ...]
    struts: Tuple[Tuple[int, int], ...]
    clip_y: bool = True


TOPOLOGIES: Dict[str, TopologyDef] = {
    # X-braced: both diagonals, crossing at the cell centre
    "UC1": TopologyDef(
        nodes=((0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)),
        struts=((0, 4), (4, 2), (1, 4), (4, 3)),
    ),
    # N-braced: side verticals and one diagonal
    "UC2": TopologyDef(
        nodes=((0, 0), (1, 0), (1, 1), (0, 1)),
        struts=((0, 3), (1, 2), (0, 2)),
    ),
    # square frame on the cell edges
    "UC3": TopologyDef(
        nodes=((0, 0), (1, 0), (1, 1), (0, 1)),
        struts=((0, 1), (1, 2), (2, 3), (3, 0)),
        clip_y=False,
    ),
    # side verticals, mid-height horizontal strut and a stub under its centre
    "UC4": TopologyDef(
        nodes=((0, 0), (0, 0.5), (0, 1), (1, 0), (1, 0.5), (1, 1), (0.5, 0), (0.5, 0.5)),
        struts=((0, 1), (1, 2), (3, 4), (4, 5), (1, 7), (7, 4), (6, 7)),
    ),
}


@dataclass
class LatticeSpec:
    topology: str
    a: float
    b: float
    rho: float = 0.2
    n_x_cells: int = 1
    n_y_cells: int = 1
    degree: int = 3
    refinement: int = 0
    element_aspect: float = 2.0
    width: Optional[float] = None
    custom: Optional[TopologyDef] = field(default=None, repr=False)

    def __post_init__(self):
        if self.topology not in TOPOLOGY_IDS and self.custom is None:
            raise InvalidArgumentError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGY_IDS}")
        if self.a <= 0 or self.b <= 0:
            raise InvalidArgumentError("cell width and height must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise InvalidArgumentError(f"relative density must be in (0, 1], got {self.rho}")
        if self.n_x_cells < 1 or self.n_y_cells < 1:
            raise InvalidArgumentError("tessellation counts must be >= 1")

    @property
    def topology_def(self) -> TopologyDef:
        return self.custom if self.custom is not None else TOPOLOGIES[self.topology]


@dataclass
class StrutHalf:
    strut: int
    side: str
    corners: np.ndarray
    n_along: int


def _trapezoid_corners(p0, p1, w0, w1, offsets=(0.0, 0.0, 0.0, 0.0)):
    """Corner quads of the two halves of a strut.

    offsets = (t0_left, t1_left, t0_right, t1_right): distance of each side
    corner from its end node measured along the strut, inwards positive.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    d = axis / length
    n = np.array([-d[1], d[0]])

    def side_point(t, sign):
        half = 0.5 * (w0 + (w1 - w0) * t / length)
        return p0 + t * d + sign * half * n

    t0l, t1l, t0r, t1r = offsets
    left = np.array([p0, p1, side_point(length - t1l, 1.0), side_point(t0l, 1.0)])
    right = np.array([side_point(t0r, -1.0), side_point(length - t1r, -1.0), p1, p0])
    return left, right


def build_strut(p0, p1, w0: float, w1: float, degree: int = 3, n_along: int = 1,
                offsets=(0.0, 0.0, 0.0, 0.0), label: str = "strut") -> List[NurbsPatch]:
    """Two trapezoid patches for a strut from p0 to p1 with end widths w0, w1.

    The left half runs from the midline (eta=0) to the left side, the right
    half from the right side to the midline, both with xi from p0 to p1.
    """
    length = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)))
    if w0 <= 0 or w1 <= 0:
        raise InvalidArgumentError("strut widths must be positive")
    if length <= max(w0, w1):
        raise DegenerateGeometryError(f"strut of length {length:.3e} is not longer than its width {max(w0, w1):.3e}")
    left, right = _trapezoid_corners(p0, p1, w0, w1, offsets)
    return [
        bilinear_patch(left, (degree, degree), (n_along, 1), f"{label}:L"),
        bilinear_patch(right, (degree, degree), (n_along, 1), f"{label}:R"),
    ]


def lattice_graph(spec: LatticeSpec) -> Tuple[np.ndarray, List[Tuple[int, int]], Optional[Tuple[float, float]]]:
    """Nodes and deduplicated struts of the tessellated specimen."""
    topo = spec.topology_def
    scale = np.array([spec.a, spec.b])
    key_tol = 1e-9 * max(spec.a, spec.b)
    index: Dict[Tuple[int, int], int] = {}
    nodes: List[np.ndarray] = []
    struts = set()

    def node_id(x):
        key = tuple(int(round(v / key_tol)) for v in x)
        if key not in index:
            index[key] = len(nodes)
            nodes.append(x)
        return index[key]

    for cy in range(spec.n_y_cells):
        for cx in range(spec.n_x_cells):
            shift = np.array([cx * spec.a, cy * spec.b])
            ids = [node_id(np.asarray(p, dtype=float) * scale + shift) for p in topo.nodes]
            for i, j in topo.struts:
                a, b = ids[i], ids[j]
                if a != b:
                    struts.add((min(a, b), max(a, b)))
    nodes_arr = np.array(nodes)
    strut_list = sorted(struts)
    _check_no_t_junctions(nodes_arr, strut_list, key_tol)
    walls = (0.0, spec.n_y_cells * spec.b) if topo.clip_y else None
    return nodes_arr, strut_list, walls


def _check_no_t_junctions(nodes: np.ndarray, struts: Sequence[Tuple[int, int]], tol: float) -> None:
    for i, j in struts:
        p, q = nodes[i], nodes[j]
        d = q - p
        t = np.clip((nodes - p) @ d / (d @ d), 0.0, 1.0)
        dist = np.linalg.norm(nodes - (p + t[:, None] * d), axis=1)
        inside = (dist < tol) & (t > 1e-9) & (t < 1.0 - 1e-9)
        if np.any(inside):
            raise InvalidArgumentError(f"node {int(np.argmax(inside))} lies inside strut ({i}, {j}); split the strut")


def _end_offsets(nodes, struts, width, walls):
    """Inward corner offsets (left, right) at both ends of every strut."""
    wall_tol = 1e-9 * float(np.max(np.ptp(nodes, axis=0)) or 1.0)
    rays: Dict[int, List[Tuple[float, str, int]]] = {i: [] for i in range(len(nodes))}
    for s, (i, j) in enumerate(struts):
        d = nodes[j] - nodes[i]
        rays[i].append((math.atan2(d[1], d[0]) % (2 * math.pi), "strut", s))
        rays[j].append((math.atan2(-d[1], -d[0]) % (2 * math.pi), "strut", s))
    if walls is not None:
        for i, x in enumerate(nodes):
            if any(abs(x[1] - y) < wall_tol for y in walls):
                rays[i].append((0.0, "wall", -1))
                rays[i].append((math.pi, "wall", -1))
    for r in rays.values():
        r.sort()

    half = 0.5 * width

    def offset(node, strut, angle, turn):
        """Offset of the side corner facing the next ray in rotational direction turn (+1 ccw)."""
        others = [r for r in rays[node] if not (r[1] == "strut" and r[2] == strut)]
        gaps = [((turn * (r[0] - angle)) % (2 * math.pi), r) for r in others]
        gaps = [(g, r) for g, r in gaps if g > 1e-12]
        if not gaps:
            # dangling end
            return 0.0
        gap, ray = min(gaps, key=lambda item: item[0])
        if ray[1] == "wall":
            if gap >= math.pi - 1e-12:
                raise DegenerateGeometryError(f"strut at node {node} points out of the clipping wall")
            return half / math.tan(gap)
        if gap > 5.0 * math.pi / 3.0:
            # nearly dangling end: square cut
            return 0.0
        return half / math.tan(0.5 * gap)

    out = []
    for s, (i, j) in enumerate(struts):
        d = nodes[j] - nodes[i]
        a0 = math.atan2(d[1], d[0]) % (2 * math.pi)
        a1 = math.atan2(-d[1], -d[0]) % (2 * math.pi)
        # left side is ccw of d at node i and cw of -d at node j
        out.append((offset(i, s, a0, +1), offset(j, s, a1, -1), offset(i, s, a0, -1), offset(j, s, a1, +1)))
    return out


def strut_halves(nodes: np.ndarray, struts: Sequence[Tuple[int, int]], width: float,
                 walls: Optional[Tuple[float, float]], element_aspect: float = 2.0) -> List[StrutHalf]:
    halves = []
    for s, ((i, j), offs) in enumerate(zip(struts, _end_offsets(nodes, struts, width, walls))):
        length = float(np.linalg.norm(nodes[j] - nodes[i]))
        n_along = max(1, int(math.ceil(length / (element_aspect * width) - 1e-9)))
        left, right = _trapezoid_corners(nodes[i], nodes[j], width, width, offs)
        for side, quad in (("L", left), ("R", right)):
            if signed_area(quad) <= 0.0 or not is_convex(quad):
                raise DegenerateGeometryError(f"strut {s} half {side} is not convex at width {width:.4e}")
            halves.append(StrutHalf(s, side, quad, n_along))
    return halves


def material_area(halves: Sequence[StrutHalf]) -> float:
    return float(sum(signed_area(h.corners) for h in halves))


def solve_strut_width(spec: LatticeSpec, rel_tol: float = 1e-6) -> float:
    """Bisection on strut width so the material area equals rho * a * b * n_cells."""
    nodes, struts, walls = lattice_graph(spec)
    target = spec.rho * spec.a * spec.b * spec.n_x_cells * spec.n_y_cells
    min_len = min(float(np.linalg.norm(nodes[j] - nodes[i])) for i, j in struts)

    def area(w):
        try:
            return material_area(strut_halves(nodes, struts, w, walls, spec.element_aspect))
        except DegenerateGeometryError:
            return None

    hi = 0.5 * min_len
    while area(hi) is None:
        hi *= 0.8
        if hi < 1e-6 * min_len:
            raise InvalidArgumentError(f"no valid strut width for topology {spec.topology}")
    if area(hi) < target:
        raise InvalidArgumentError(
            f"relative density {spec.rho} is infeasible for {spec.topology} (max {area(hi) / (target / spec.rho):.3f})"
        )
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        a = area(mid)
        if a is not None and a < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rectangle_patches(width: float, height: float, n_x: int, n_y: int, degree: int = 3,
                      n_elements: Tuple[int, int] = (1, 1), origin=(0.0, 0.0), label: str = "block") -> List[NurbsPatch]:
    """Grid of n_x by n_y rectangular patches covering [0,width]x[0,height]."""
    x0, y0 = origin
    dx, dy = width / n_x, height / n_y
    patches = []
    for j in range(n_y):
        for i in range(n_x):
            xa, ya = x0 + i * dx, y0 + j * dy
            corners = [(xa, ya), (xa + dx, ya), (xa + dx, ya + dy), (xa, ya + dy)]
            patches.append(bilinear_patch(corners, (degree, degree), n_elements, f"{label}[{i},{j}]"))
    return patches


def _lattice_patches(spec: LatticeSpec, n_x: int, n_y: int) -> List[NurbsPatch]:
    if spec.topology == "SOLID" and spec.custom is None:
        n_el = max(1, int(round(spec.a / spec.b))), max(1, int(round(spec.b / spec.a)))
        return rectangle_patches(n_x * spec.a, n_y * spec.b, n_x, n_y, spec.degree, n_el, label="cell")
    cell = LatticeSpec(**{**spec.__dict__, "n_x_cells": n_x, "n_y_cells": n_y})
    width = spec.width if spec.width is not None else solve_strut_width(cell)
    nodes, struts, walls = lattice_graph(cell)
    halves = strut_halves(nodes, struts, width, walls, spec.element_aspect)
    patches = [bilinear_patch(h.corners, (spec.degree, spec.degree), (h.n_along, 1), f"strut{h.strut}:{h.side}")
               for h in halves]
    logger.info(f"{spec.topology} {n_x}x{n_y}: {len(struts)} struts, width {width:.4e} m, "
                f"density {material_area(halves) / (spec.a * spec.b * n_x * n_y):.4f}")
    return patches


def build_unit_cell(spec: LatticeSpec) -> List[NurbsPatch]:
    """Patches of one unit cell with the strut width solved for rho."""
    return refine_patches(_lattice_patches(spec, 1, 1), spec.refinement)


def tessellate(spec: LatticeSpec) -> MultiPatchMesh:
    """n_x by n_y copies of the cell with shared boundary nodes merged."""
    patches = refine_patches(_lattice_patches(spec, spec.n_x_cells, spec.n_y_cells), spec.refinement)
    return build_mesh(patches)
