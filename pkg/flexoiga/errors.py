"""
Exception hierarchy for the flexoelectric IGA solver.

Every failure the solver can report maps onto exactly one class below so the
CLI and the HTTP service can translate it into an exit code or status.
"""

from typing import List, Optional


class FlexoIGAError(Exception):
    """Base class for all solver errors."""


class InvalidArgumentError(FlexoIGAError, ValueError):
    """An argument violates a documented precondition."""


class OutOfDomainError(FlexoIGAError, ValueError):
    """A parameter or point lies outside the domain it is evaluated on."""


class DegenerateGeometryError(FlexoIGAError):
    """A mapping folds or collapses (detJ <= 0) or a strut is too short."""


class NonconformingInterfaceError(FlexoIGAError):
    """Two patch edges overlap only partially."""


class SingularMaterialError(FlexoIGAError):
    """Material constants produce a singular constitutive matrix."""


class SolverFailureError(FlexoIGAError):
    """The constrained system could not be factorized or solved accurately."""

    def __init__(self, message: str, condition_estimate: Optional[float] = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NotApplicableError(FlexoIGAError):
    """A diagnostic was requested for a mesh it does not apply to."""


class ConfigError(FlexoIGAError):
    """A scenario document failed to parse or validate."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  - {d}" for d in self.diagnostics)
