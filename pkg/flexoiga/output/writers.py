"""
Result writers: legacy ASCII VTK field files and CSV tables.
"""

import logging
import os
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import meshio
import numpy as np
import pandas as pd

from ..errors import InvalidArgumentError
from ..fem.solve_post import SolutionField, point_values
from ..iga.patch_geometry import MultiPatchMesh, map_point

logger = logging.getLogger(__name__)

# legacy layout (CELLS with counts, no OFFSETS) that older readers accept
VTK_FORMAT_VERSION = "4.2"
FLOAT_FORMAT = "%.17e"


def _ensure_parent(path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def field_mesh(sol: SolutionField, mesh: MultiPatchMesh, sampling: int) -> meshio.Mesh:
    """Tessellate every patch into sampling x sampling quads with point data."""
    if sampling < 1:
        raise InvalidArgumentError("sampling must be >= 1")
    s = np.linspace(0.0, 1.0, sampling + 1)
    row = sampling + 1
    points, quads = [], []
    u, phi, eps11, E2 = [], [], [], []
    for k, patch in enumerate(mesh.patches):
        base = len(points)
        for eta in s:
            for xi in s:
                disp, potential, state = point_values(sol, mesh, k, float(xi), float(eta))
                points.append(map_point(patch, xi, eta))
                u.append(disp)
                phi.append(potential)
                eps11.append(float(state.eps[0]))
                E2.append(float(state.Efield[1]))
        for j in range(sampling):
            for i in range(sampling):
                a = base + j * row + i
                quads.append([a, a + 1, a + row + 1, a + row])

    pts = np.zeros((len(points), 3))
    pts[:, :2] = points
    padded = np.zeros((len(u), 3))
    padded[:, :2] = u
    return meshio.Mesh(
        pts,
        [("quad", np.array(quads, dtype=np.int64))],
        point_data={"u": padded, "phi": np.array(phi), "eps11": np.array(eps11), "E2": np.array(E2)},
    )


def write_vtk(sol: SolutionField, mesh: MultiPatchMesh, path: str, sampling: int = 8) -> str:
    """Write u (padded to 3 components), phi, eps11 and E2 as a legacy ASCII VTK file."""
    _ensure_parent(path)
    meshio.vtk.write(path, field_mesh(sol, mesh, sampling), binary=False,
                     fmt_version=VTK_FORMAT_VERSION)
    logger.info(f"Wrote VTK field file {path}")
    return path


def write_csv(rows: Iterable[Mapping[str, Any]], path: str, columns: Sequence[str]) -> str:
    """Header row plus one row per record; missing keys and None are written empty."""
    _ensure_parent(path)
    df = pd.DataFrame([dict(row) for row in rows], columns=list(columns))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n", encoding="utf-8")
    logger.info(f"Wrote CSV table {path} ({len(df)} rows)")
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    """Rows as text cells, exactly as written."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    return df.to_dict("records")
