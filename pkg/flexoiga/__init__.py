# flexoiga package
"""
Multi-patch isogeometric solver for flexoelectric dielectrics and lattice
metamaterials, with interior-penalty coupling across patch interfaces.
"""

from .errors import ConfigError, FlexoIGAError, SolverFailureError
from .scenarios import Scenario, list_presets, load_preset

__all__ = ['ConfigError', 'FlexoIGAError', 'SolverFailureError', 'Scenario', 'list_presets', 'load_preset']
