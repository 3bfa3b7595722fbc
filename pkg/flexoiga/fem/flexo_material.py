"""
Constitutive constants and pointwise flexoelectric constitutive law (2D, plane strain).

Vector orderings used everywhere in the solver:
    eps      = [eps11, eps22, gamma12]                  (engineering shear)
    grad_eps = [eps11,1, eps22,1, gamma12,1, eps11,2, eps22,2, gamma12,2]
    E        = [E1, E2]
"""

import logging
from dataclasses import dataclass
from typing import Dict, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..errors import InvalidArgumentError, SingularMaterialError

logger = logging.getLogger(__name__)

CouplingMode = Literal["combined", "flexo_only", "piezo_only"]

# dielectric constant ratio used to make a direction electrically inert without a singular kappa
INERT_KAPPA_RATIO = 1e-8


def build_C(E: float, nu: float) -> np.ndarray:
    """Plane-strain elasticity matrix."""
    if E <= 0.0:
        raise InvalidArgumentError(f"Young's modulus must be positive, got {E}")
    if nu == 0.5:
        raise SingularMaterialError("nu = 0.5 makes the plane-strain elasticity matrix singular")
    if not -1.0 < nu < 0.5:
        raise InvalidArgumentError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
    ])


def build_h(C: np.ndarray, L: float) -> np.ndarray:
    """Strain-gradient elasticity matrix: two copies of the C pattern scaled by L^2."""
    C = np.asarray(C, dtype=np.float64)
    block = np.zeros((3, 3))
    block[:2, :2] = C[:2, :2]
    block[2, 2] = C[2, 2]
    h = np.zeros((6, 6))
    h[:3, :3] = block
    h[3:, 3:] = block
    return L ** 2 * h


def build_kappa(k11: float, k22: float) -> np.ndarray:
    if k11 <= 0.0 or k22 <= 0.0:
        raise InvalidArgumentError(f"permittivities must be positive, got ({k11}, {k22})")
    return np.diag([k11, k22]).astype(np.float64)


def build_e(e15: float, e21: float, e22: float, e11: float = 0.0) -> np.ndarray:
    """Piezoelectric matrix; e11 fills the (1,1) slot left empty by the hexagonal pattern."""
    return np.array([
        [e11, 0.0, e15],
        [e21, e22, 0.0],
    ])


def build_mu(mu11: float, mu12: float, mu44: float) -> np.ndarray:
    return np.array([
        [mu11, mu12, 0.0, 0.0, 0.0, mu44],
        [0.0, 0.0, mu44, mu12, mu11, 0.0],
    ])


class MaterialSet(BaseModel):
    """All constants of a flexoelectric dielectric, SI units.

    Defaults are the validation material with a 0.1 nm length scale.
    """

    model_config = ConfigDict(frozen=True)

    E: float = 100e9
    nu: float = 0.37
    kappa11: float = 12.48e-9
    kappa22: float = 12.48e-9
    e11: float = 4.4
    e21: float = -4.4
    e22: float = 0.0
    e15: float = 0.0
    mu11: float = 1e-6
    mu12: float = 1e-6
    mu44: float = 0.0
    L: float = 1e-10

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.E <= 0.0:
            raise ValueError("E must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (-1, 0.5)")
        if self.kappa11 <= 0.0 or self.kappa22 <= 0.0:
            raise ValueError("kappa11 and kappa22 must be positive")
        if self.L < 0.0:
            raise ValueError("L must be non-negative")
        return self

    @property
    def C(self) -> np.ndarray:
        return build_C(self.E, self.nu)

    @property
    def h(self) -> np.ndarray:
        return build_h(self.C, self.L)

    @property
    def kappa(self) -> np.ndarray:
        return build_kappa(self.kappa11, self.kappa22)

    @property
    def e(self) -> np.ndarray:
        return build_e(self.e15, self.e21, self.e22, self.e11)

    @property
    def mu(self) -> np.ndarray:
        return build_mu(self.mu11, self.mu12, self.mu44)

    def with_mode(self, mode: CouplingMode) -> "MaterialSet":
        """Switch off flexoelectric (piezo_only) or piezoelectric (flexo_only) coupling."""
        if mode == "combined":
            return self
        if mode == "flexo_only":
            return self.model_copy(update={"e11": 0.0, "e21": 0.0, "e22": 0.0, "e15": 0.0})
        if mode == "piezo_only":
            return self.model_copy(update={"mu11": 0.0, "mu12": 0.0, "mu44": 0.0})
        raise InvalidArgumentError(f"unknown coupling mode {mode!r}")


PRESETS: Dict[str, MaterialSet] = {
    "standard": MaterialSet(),
    # beam-theory reduction: nu, kappa11, mu11 and e11 switched off
    "one_d": MaterialSet(nu=0.0, kappa11=INERT_KAPPA_RATIO * 12.48e-9, e11=0.0, mu11=0.0),
}


def material_preset(name: str, **overrides) -> MaterialSet:
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown material preset {name!r}; expected one of {sorted(PRESETS)}")
    if not overrides:
        return PRESETS[name]
    logger.debug(f"Material preset {name} with overrides {sorted(overrides)}")
    return PRESETS[name].model_copy(update=overrides)


@dataclass
class PointState:
    """Kinematic state at one or many points (leading axes broadcast)."""

    eps: np.ndarray
    grad_eps: np.ndarray
    Efield: np.ndarray

    @classmethod
    def zeros(cls, shape=()) -> "PointState":
        shape = tuple(shape)
        return cls(np.zeros(shape + (3,)), np.zeros(shape + (6,)), np.zeros(shape + (2,)))


@dataclass
class PointFlux:
    sigma_hat: np.ndarray
    sigma_tilde: np.ndarray
    D_hat: np.ndarray


def constitutive(state: PointState, mat: MaterialSet) -> PointFlux:
    C, h, kappa, e, mu = mat.C, mat.h, mat.kappa, mat.e, mat.mu
    eps = np.asarray(state.eps, dtype=np.float64)
    geps = np.asarray(state.grad_eps, dtype=np.float64)
    E = np.asarray(state.Efield, dtype=np.float64)
    sigma_hat = eps @ C.T - E @ e
    sigma_tilde = geps @ h.T - E @ mu
    D_hat = E @ kappa.T + eps @ e.T + geps @ mu.T
    return PointFlux(sigma_hat, sigma_tilde, D_hat)


def enthalpy(state: PointState, mat: MaterialSet) -> np.ndarray:
    """Electric enthalpy density; its derivatives give the fluxes of `constitutive`."""
    eps, geps, E = state.eps, state.grad_eps, state.Efield
    mech = 0.5 * np.einsum("...i,ij,...j->...", eps, mat.C, eps) \
        + 0.5 * np.einsum("...i,ij,...j->...", geps, mat.h, geps)
    elec = 0.5 * np.einsum("...i,ij,...j->...", E, mat.kappa, E)
    coupling = np.einsum("...i,ij,...j->...", E, mat.e, eps) + np.einsum("...i,ij,...j->...", E, mat.mu, geps)
    return mech - elec - coupling


def mechanical_enthalpy(state: PointState, mat: MaterialSet) -> np.ndarray:
    return 0.5 * np.einsum("...i,ij,...j->...", state.eps, mat.C, state.eps) \
        + 0.5 * np.einsum("...i,ij,...j->...", state.grad_eps, mat.h, state.grad_eps)
