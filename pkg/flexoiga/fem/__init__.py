# Material law, assembly, solve and post-processing
from .fe_assembly import BoundarySpec, CoupledSystem, assemble
from .flexo_material import MaterialSet, material_preset
from .solve_post import SolutionField, energies, interface_jump_metric, solve

__all__ = ['BoundarySpec', 'CoupledSystem', 'assemble', 'MaterialSet', 'material_preset', 'SolutionField',
           'energies', 'interface_jump_metric', 'solve']
