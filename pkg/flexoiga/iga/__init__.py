# Geometry: splines, patches, multi-patch meshes and lattice generators
from .lattice import LatticeSpec, build_unit_cell, tessellate
from .patch_geometry import MultiPatchMesh, bilinear_patch, build_mesh, refine_patch

__all__ = ['LatticeSpec', 'build_unit_cell', 'tessellate', 'MultiPatchMesh', 'bilinear_patch', 'build_mesh',
           'refine_patch']
