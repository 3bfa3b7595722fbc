"""
Scenario driver: builds geometry, boundary conditions and material for each
sweep point of a scenario, solves, post-processes and writes the result files.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .errors import ConfigError, FlexoIGAError, InvalidArgumentError, NotApplicableError, OutOfDomainError
from .fem.fe_assembly import BoundarySpec, assemble
from .fem.flexo_material import MaterialSet
from .fem.solve_post import (
    SolutionField,
    analytical_kem,
    energies,
    hprime_thickness,
    interface_jump_metric,
    line_profile,
    mean_displacement,
    point_values,
    potential_difference,
    solve,
)
from .iga.lattice import LatticeSpec, rectangle_patches, tessellate
from .iga.patch_geometry import MultiPatchMesh, bilinear_patch, build_mesh, refine_patches
from .output.writers import write_csv, write_vtk
from .scenarios import Scenario, apply_overrides, variant_scenarios
from .settings import Settings, get_settings

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "scenario", "variant", "sweep_axis", "sweep_value", "n_patches", "n_interfaces", "n_dofs", "n_free",
    "thickness", "hprime", "tau", "beta", "residual", "max_displacement", "tip_deflection",
    "W_mech", "W_elec", "K_EM", "K_EM_normalized", "K_EM_analytic", "jump", "delta_phi",
    "mean_E2", "applied_field",
]
PROFILE_COLUMNS = ["variant", "sweep_value", "x", "y", "phi", "eps11", "E2"]

# fraction of the smaller cell dimension used to pick lattice end nodes
LATTICE_BAND_RATIO = 0.05


class RunRecord(BaseModel):
    """One solved sweep point."""

    scenario: str
    variant: str
    sweep_axis: str
    sweep_value: Optional[float] = None
    n_patches: int
    n_interfaces: int
    n_dofs: int
    n_free: int
    thickness: float
    hprime: Optional[float] = None
    tau: Optional[float] = None
    beta: float
    residual: float
    max_displacement: float
    tip_deflection: Optional[float] = None
    W_mech: Optional[float] = None
    W_elec: Optional[float] = None
    K_EM: Optional[float] = None
    K_EM_normalized: Optional[float] = None
    K_EM_analytic: Optional[float] = None
    jump: Optional[float] = None
    delta_phi: Optional[float] = None
    mean_E2: Optional[float] = None
    applied_field: Optional[float] = None
    wall_time: float = 0.0


@dataclass
class GeometryInfo:
    length: float
    height: float
    reference_length: float
    band: float
    hprime: Optional[float] = None


@dataclass
class BoundarySets:
    bottom: np.ndarray
    top: np.ndarray
    left: np.ndarray
    right: np.ndarray


@dataclass
class PointResult:
    record: RunRecord
    solution: SolutionField
    mesh: MultiPatchMesh
    material: MaterialSet
    profile: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class ScenarioResult:
    scenario: str
    records: List[RunRecord]
    files: List[str]


def sweep_point(scn: Scenario, value: Optional[float]) -> Scenario:
    """Scenario with the sweep axis set to one value."""
    axis = scn.sweep.axis
    if axis == "none" or value is None:
        return scn
    doc = scn.model_dump()
    if axis == "tau":
        doc = apply_overrides(doc, {"dg.tau": float(value)})
    elif axis == "beta":
        doc = apply_overrides(doc, {"dg.beta": float(value)})
    elif axis == "mesh":
        doc = apply_overrides(doc, {"discretization.refinement": int(value)})
    elif axis == "hprime":
        doc = apply_overrides(doc, {"geometry.hprime": float(value)})
    elif axis == "thickness":
        if scn.geometry.kind == "lattice":
            lat = scn.geometry.lattice
            scale = float(value) / (lat.n_y * lat.b)
            doc = apply_overrides(doc, {"geometry.lattice.a": lat.a * scale, "geometry.lattice.b": lat.b * scale})
        else:
            doc = apply_overrides(doc, {"geometry.thickness": float(value), "geometry.hprime": None})
    elif axis == "tessellation":
        n = int(value)
        doc = apply_overrides(doc, {"geometry.lattice.n_x": n, "geometry.lattice.n_y": n})
    return Scenario.model_validate(doc)


def build_geometry(scn: Scenario) -> Tuple[MultiPatchMesh, GeometryInfo]:
    geo, disc = scn.geometry, scn.discretization
    degree = disc.degree
    if geo.kind == "cantilever":
        hprime = geo.hprime
        if hprime is not None:
            thickness = hprime_thickness(scn.material.base(), hprime)
            length = geo.aspect * thickness
        else:
            thickness, length = geo.thickness, geo.length
        gx, gy = geo.patch_grid
        patches = rectangle_patches(length, thickness, gx, gy, degree,
                                    (disc.elements_along, disc.elements_across), label="beam")
        mesh = build_mesh(refine_patches(patches, disc.refinement))
        return mesh, GeometryInfo(length, thickness, thickness, 0.0, hprime)

    if geo.kind == "lattice":
        lat = geo.lattice
        spec = LatticeSpec(
            topology=lat.topology, a=lat.a, b=lat.b, rho=lat.rho,
            n_x_cells=lat.n_x, n_y_cells=lat.n_y, degree=degree, refinement=disc.refinement,
            element_aspect=lat.element_aspect, width=lat.width,
            custom=lat.custom.to_def() if lat.custom is not None else None,
        )
        mesh = tessellate(spec)
        band = scn.load.band if scn.load.band is not None else LATTICE_BAND_RATIO * min(lat.a, lat.b)
        return mesh, GeometryInfo(lat.n_x * lat.a, lat.n_y * lat.b, lat.b, band)

    patches = [bilinear_patch(p.corners, (degree, degree), p.elements, p.label or f"patch{i}")
               for i, p in enumerate(geo.patches)]
    mesh = build_mesh(refine_patches(patches, disc.refinement))
    lo, hi = mesh.bounding_box
    height = float(hi[1] - lo[1])
    return mesh, GeometryInfo(float(hi[0] - lo[0]), height, height, scn.load.band or 0.0)


def _extreme_node(mesh: MultiPatchMesh, nodes: np.ndarray, key) -> int:
    if len(nodes) == 0:
        raise InvalidArgumentError("no boundary nodes to choose from")
    return int(nodes[np.argmax([key(mesh.nodes[n]) for n in nodes])])


def build_boundary(scn: Scenario, mesh: MultiPatchMesh, info: GeometryInfo) -> Tuple[BoundarySpec, BoundarySets]:
    """Supports, loads and electrodes for the scenario's load case."""
    load = scn.load
    sets = BoundarySets(*(mesh.boundary_nodes(side, info.band) for side in ("bottom", "top", "left", "right")))
    bc = BoundarySpec()
    prescribed = -load.deflection_ratio * info.reference_length if load.deflection_ratio is not None else load.magnitude

    if load.case == "compression":
        if load.supports == "clamped":
            bc.fix_displacement(sets.bottom, (0, 1))
        else:
            bc.fix_displacement(sets.bottom, (1,))
            bc.fix_displacement([_extreme_node(mesh, sets.bottom, lambda x: -x[0])], (0,))
        bc.fix_displacement(sets.top, (1,), prescribed)
    else:
        if len(sets.left) == 0:
            raise InvalidArgumentError("no nodes found on the clamped left end")
        bc.fix_displacement(sets.left, (0, 1))
        if load.case == "bending_deflection":
            bc.fix_displacement(sets.right, (1,), prescribed)
        elif load.case == "tip_load":
            if load.kind == "point":
                corner = _extreme_node(mesh, sets.right, lambda x: x[1])
                bc.add_point_load(corner, (0.0, load.magnitude))
            elif load.kind == "traction":
                edges = mesh.boundary_edge_list("right")
                if not edges:
                    raise InvalidArgumentError("the right end has no straight boundary edge for a traction")
                bc.add_traction(edges, (0.0, load.magnitude / info.height))
            else:
                bc.fix_displacement(sets.right, (1,), prescribed)

    if load.electrical == "floating":
        support = sets.bottom if load.case == "compression" else sets.left
        bc.fix_potential([_extreme_node(mesh, support, lambda x: -x[1] - x[0])], 0.0)
    elif load.electrical == "electrodes":
        bc.fix_potential(sets.bottom, 0.0)
        bc.tie_potential(sets.top)
    else:
        bc.fix_potential(sets.bottom, load.potential)
        bc.fix_potential(sets.top, 0.0)
    return bc, sets


class ScenarioWorkflow:
    def __init__(self, settings: Optional[Settings] = None):
        """Solver driver configured from the process settings."""
        self.settings = settings or get_settings()

    def plan(self, scn: Scenario) -> List[Tuple[str, Scenario, Optional[float]]]:
        """(variant label, variant scenario, sweep value) for every run of a scenario."""
        points = []
        for label, variant in variant_scenarios(scn):
            for value in variant.sweep.points():
                points.append((label, variant, value))
        return points

    def _solve_once(self, scn: Scenario, mesh: MultiPatchMesh, mat: MaterialSet, bc: BoundarySpec):
        dg = scn.dg
        system = assemble(mesh, mat, bc, tau=dg.tau, beta=dg.beta, alpha=dg.alpha, dg=dg.enabled)
        return system, solve(system)

    def _profile(self, scn: Scenario, label: str, value, sol, mesh, mat) -> List[Dict[str, Any]]:
        kind = scn.outputs.profile
        if kind == "none":
            return []
        lo, hi = mesh.bounding_box
        mid = 0.5 * (lo + hi)
        if kind == "eps11_midline":
            start, end = (lo[0], mid[1]), (hi[0], mid[1])
        else:
            start, end = (mid[0], lo[1]), (mid[0], hi[1])
        try:
            points, state, _ = line_profile(sol, mesh, mat, start, end, scn.outputs.profile_samples)
        except OutOfDomainError as e:
            logger.warning(f"Skipping {kind} profile of {scn.name}/{label}: {e}")
            return []
        return [
            {"variant": label, "sweep_value": value, "x": float(p[0]), "y": float(p[1]),
             "phi": point_values(sol, mesh, *mesh.locate(p))[1],
             "eps11": float(state.eps[i, 0]), "E2": float(state.Efield[i, 1])}
            for i, p in enumerate(points)
        ]

    def run_point(self, name: str, label: str, scn: Scenario, value: Optional[float]) -> PointResult:
        started = time.perf_counter()
        point = sweep_point(scn, value)
        mat = point.material.build()
        mesh, info = build_geometry(point)
        bc, sets = build_boundary(point, mesh, info)
        system, sol = self._solve_once(point, mesh, mat, bc)

        W_mech = W_elec = K_EM = K_norm = K_analytic = None
        try:
            report = energies(sol, mesh, mat)
            W_mech, W_elec, K_EM = report.W_mech, report.W_elec, report.K_EM
        except NotApplicableError as e:
            logger.warning(f"{name}/{label}: {e}")

        if K_EM is not None and point.outputs.normalize_kem:
            if point.material.mode == "piezo_only":
                K_norm = 1.0
            else:
                reference = point.material.base().with_mode("piezo_only")
                _, ref_sol = self._solve_once(point, mesh, reference, bc)
                K_ref = energies(ref_sol, mesh, reference).K_EM
                K_norm = K_EM / K_ref if K_ref > 0.0 else None

        if point.geometry.kind == "cantilever":
            try:
                K_analytic = analytical_kem(point.material.base(), info.height, point.material.mode)[1]
            except InvalidArgumentError:
                K_analytic = None

        jump = None
        if mesh.interfaces:
            jump = interface_jump_metric(sol, mesh, point.outputs.jump_quantity)

        delta_phi = None
        if len(sets.top) and len(sets.bottom):
            delta_phi = potential_difference(sol, sets.top, sets.bottom, info.height)

        profile = self._profile(point, label, value, sol, mesh, mat)
        mean_E2 = float(np.mean([row["E2"] for row in profile])) if profile else None
        applied_field = point.load.potential / info.height if point.load.electrical == "applied" else None

        record = RunRecord(
            scenario=name,
            variant=label,
            sweep_axis=point.sweep.axis,
            sweep_value=value,
            n_patches=len(mesh.patches),
            n_interfaces=len(mesh.interfaces),
            n_dofs=sol.n_dofs,
            n_free=sol.n_free,
            thickness=info.height,
            hprime=info.hprime,
            tau=point.dg.tau if point.dg.enabled else None,
            beta=point.dg.beta,
            residual=sol.residual,
            max_displacement=sol.max_displacement,
            tip_deflection=mean_displacement(sol, sets.right) if len(sets.right) else None,
            W_mech=W_mech,
            W_elec=W_elec,
            K_EM=K_EM,
            K_EM_normalized=K_norm,
            K_EM_analytic=K_analytic,
            jump=jump,
            delta_phi=delta_phi,
            mean_E2=mean_E2,
            applied_field=applied_field,
            wall_time=time.perf_counter() - started,
        )
        logger.info(
            f"{name}/{label} {point.sweep.axis}={value}: {sol.n_dofs} DOFs, "
            f"max |u| {sol.max_displacement:.4e} m, K_EM {K_EM if K_EM is None else f'{K_EM:.4e}'}"
        )
        return PointResult(record, sol, mesh, mat, profile)

    def iter_points(self, scn: Scenario) -> Iterator[PointResult]:
        """Run every point of a scenario in order, one at a time."""
        for note in scn.notes:
            logger.warning(f"{scn.name}: {note}")
        for label, variant, value in self.plan(scn):
            yield self.run_point(scn.name, label, variant, value)

    def run_scenario(self, scn: Scenario, out_dir: Optional[str] = None, vtk: Optional[bool] = None) -> ScenarioResult:
        """Run all points (in a worker pool when max_workers > 1) and write the result files."""
        for note in scn.notes:
            logger.warning(f"{scn.name}: {note}")
        points = self.plan(scn)
        logger.info(f"Running scenario {scn.name}: {len(points)} point(s)")
        if self.settings.max_workers > 1 and len(points) > 1:
            with ThreadPoolExecutor(max_workers=self.settings.max_workers) as pool:
                results = list(pool.map(lambda p: self.run_point(scn.name, *p), points))
        else:
            results = [self.run_point(scn.name, *p) for p in points]
        files = self.write_outputs(scn, results, out_dir or self.settings.output_dir,
                                   scn.outputs.vtk if vtk is None else vtk)
        return ScenarioResult(scn.name, [r.record for r in results], files)

    def write_outputs(self, scn: Scenario, results: List[PointResult], out_dir: str, vtk: bool) -> List[str]:
        files = []
        if scn.outputs.csv:
            rows = [r.record.model_dump() for r in results]
            files.append(write_csv(rows, os.path.join(out_dir, f"{scn.name}.csv"), CSV_COLUMNS))
        profile_rows = [row for r in results for row in r.profile]
        if profile_rows:
            files.append(write_csv(profile_rows, os.path.join(out_dir, f"{scn.name}_profile.csv"), PROFILE_COLUMNS))
        if vtk:
            sampling = scn.outputs.vtk_sampling or self.settings.vtk_sampling
            for i, r in enumerate(results):
                path = os.path.join(out_dir, f"{scn.name}_{r.record.variant}_{i}.vtk")
                files.append(write_vtk(r.solution, r.mesh, path, sampling))
        return files

    def handle_run(self, scn: Scenario, out_dir: Optional[str] = None, vtk: Optional[bool] = None) -> Dict[str, Any]:
        """Run a scenario and report records or the error as a plain dict."""
        try:
            result = self.run_scenario(scn, out_dir, vtk)
            return {
                "scenario": result.scenario,
                "records": [r.model_dump() for r in result.records],
                "files": result.files,
                "error": None,
            }
        except ConfigError as e:
            logger.error(f"Invalid scenario {scn.name}: {str(e)}")
            return {"scenario": scn.name, "records": [], "files": [], "error": str(e), "kind": "config"}
        except FlexoIGAError as e:
            logger.error(f"Error in handle_run: {str(e)}", exc_info=True)
            return {"scenario": scn.name, "records": [], "files": [], "error": str(e), "kind": type(e).__name__}


# Create global instance
workflow = ScenarioWorkflow()
