"""
Tests for material constants and the pointwise constitutive law
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from pydantic import ValidationError

from flexoiga.errors import InvalidArgumentError, SingularMaterialError
from flexoiga.fem.flexo_material import (
    MaterialSet,
    PointState,
    build_C,
    build_h,
    constitutive,
    enthalpy,
    material_preset,
    mechanical_enthalpy,
)

# order-one constants so finite differences are well conditioned
UNIT_MAT = MaterialSet(E=10.0, nu=0.3, kappa11=2.0, kappa22=3.0, e11=0.7, e21=-0.4, e22=0.2, e15=0.3,
                       mu11=0.5, mu12=-0.2, mu44=0.1, L=0.7)

components = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def test_plane_strain_elasticity_entries():
    C = build_C(100e9, 0.37)
    assert C[0, 0] == pytest.approx(1.76867e11, rel=1e-5)
    assert C[0, 1] == pytest.approx(1.03874e11, rel=1e-5)
    assert C[2, 2] == pytest.approx(100e9 / (2 * 1.37), rel=1e-12)
    np.testing.assert_array_equal(C, C.T)


def test_incompressible_limit_is_singular():
    with pytest.raises(SingularMaterialError):
        build_C(100e9, 0.5)
    with pytest.raises(InvalidArgumentError):
        build_C(-1.0, 0.3)
    with pytest.raises(ValidationError):
        MaterialSet(nu=0.5)


def test_gradient_elasticity_scales_with_length():
    C = build_C(1.0, 0.25)
    h = build_h(C, 2.0)
    assert h.shape == (6, 6)
    assert h[0, 0] == pytest.approx(4.0 * C[0, 0])
    assert h[3, 4] == pytest.approx(4.0 * C[0, 1])
    assert h[5, 5] == pytest.approx(4.0 * C[2, 2])
    assert np.all(h[:3, 3:] == 0.0)
    assert np.all(build_h(C, 0.0) == 0.0)


@settings(max_examples=50, deadline=None)
@given(
    eps=arrays(np.float64, 3, elements=components),
    geps=arrays(np.float64, 6, elements=components),
    E=arrays(np.float64, 2, elements=components),
)
def test_fluxes_are_enthalpy_derivatives(eps, geps, E):
    state = PointState(eps, geps, E)
    flux = constitutive(state, UNIT_MAT)
    delta = 1e-4

    def shifted(field, i, sign):
        parts = {"eps": eps.copy(), "grad_eps": geps.copy(), "Efield": E.copy()}
        parts[field][i] += sign * delta
        return enthalpy(PointState(**parts), UNIT_MAT)

    def derivative(field, i):
        return (shifted(field, i, 1.0) - shifted(field, i, -1.0)) / (2 * delta)

    for i in range(3):
        assert flux.sigma_hat[i] == pytest.approx(derivative("eps", i), abs=1e-7)
    for i in range(6):
        assert flux.sigma_tilde[i] == pytest.approx(derivative("grad_eps", i), abs=1e-7)
    for i in range(2):
        assert flux.D_hat[i] == pytest.approx(-derivative("Efield", i), abs=1e-7)


def test_batched_states_broadcast():
    rng = np.random.default_rng(0)
    state = PointState(rng.normal(size=(4, 5, 3)), rng.normal(size=(4, 5, 6)), np.zeros((4, 5, 2)))
    flux = constitutive(state, UNIT_MAT)
    assert flux.sigma_hat.shape == (4, 5, 3)
    assert flux.D_hat.shape == (4, 5, 2)
    np.testing.assert_allclose(enthalpy(state, UNIT_MAT), mechanical_enthalpy(state, UNIT_MAT))
    assert PointState.zeros((2,)).grad_eps.shape == (2, 6)


def test_coupling_modes():
    mat = MaterialSet()
    assert mat.with_mode("combined") is mat
    flexo = mat.with_mode("flexo_only")
    assert np.all(flexo.e == 0.0)
    assert np.array_equal(flexo.mu, mat.mu)
    piezo = mat.with_mode("piezo_only")
    assert np.all(piezo.mu == 0.0)
    assert np.array_equal(piezo.e, mat.e)
    with pytest.raises(InvalidArgumentError):
        mat.with_mode("quadratic")


def test_coupling_matrix_layout():
    mat = MaterialSet(e11=1.0, e21=2.0, e22=3.0, e15=4.0, mu11=5.0, mu12=6.0, mu44=7.0)
    np.testing.assert_array_equal(mat.e, [[1.0, 0.0, 4.0], [2.0, 3.0, 0.0]])
    np.testing.assert_array_equal(mat.mu, [[5.0, 6.0, 0.0, 0.0, 0.0, 7.0], [0.0, 0.0, 7.0, 6.0, 5.0, 0.0]])


def test_presets():
    base = material_preset("standard")
    assert base.L == pytest.approx(1e-10)
    assert base.e21 == pytest.approx(-4.4)
    one_d = material_preset("one_d")
    assert one_d.nu == 0.0
    assert one_d.mu11 == 0.0 and one_d.e11 == 0.0
    assert one_d.kappa11 < 1e-6 * one_d.kappa22
    assert material_preset("standard", L=2e-10).L == pytest.approx(2e-10)
    with pytest.raises(InvalidArgumentError):
        material_preset("quartz")
