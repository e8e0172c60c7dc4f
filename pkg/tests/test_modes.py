"""Vectorial mode solver: goldens, invariants, field continuity, dispersion.

Golden values were frozen from two independent routes before these tests
were written: the analytic characteristic-equation solver itself (validated
against a finite-difference vector eigensolver, see fd_oracle.py and the
acceptance suite) and, for the dispersion orders, a degree-7 polynomial fit
of beta(omega) over +-40 nm plus direct 3- and 5-point stencils swept over
step size.
"""

import numpy as np
import pytest
from scipy.constants import c as C_LIGHT

from fwmpairs.materials import refractive_index
from fwmpairs.modes import (ModeSolverError, WaveguideGeometry,
                            beta_derivatives, characteristic_residual,
                            effective_area, nonlinear_gamma,
                            solve_fundamental_mode, _field_components)

GEO = WaveguideGeometry()

N_EFF_1550 = 2.195114253697112
AEFF_GOLDEN = {
    "poynting": 0.2133825841692742,
    "full": 0.3531763837980491,
    "transverse": 0.28878174063600914,
}
BETA1_GOLDEN = 1.1242087105445615e-08     # s/m
BETA2_GOLDEN = -6.783419413487662e-26     # s^2/m (anomalous)


def test_fundamental_mode_golden_and_residual():
    m = solve_fundamental_mode(GEO, 1550.0)
    assert m.n_eff == pytest.approx(N_EFF_1550, abs=1e-9)
    assert abs(m.residual) < 1e-10
    assert m.beta_per_m == pytest.approx(
        2 * np.pi * m.n_eff / 1550.0e-9, rel=1e-14)


@pytest.mark.parametrize("lam", [1500.0, 1525.0, 1550.0, 1575.0, 1600.0])
def test_effective_index_bounded_by_bulk(lam):
    m = solve_fundamental_mode(GEO, lam)
    n_core = refractive_index(GEO.core, lam)
    n_clad = refractive_index(GEO.cladding, lam)
    assert n_clad < m.n_eff < n_core


def test_u_w_satisfy_v_number_identity():
    m = solve_fundamental_mode(GEO, 1550.0)
    k0a = 2 * np.pi / 1550.0e-9 * m.core_radius_m
    v = k0a * np.sqrt(m.n_core ** 2 - m.n_clad ** 2)
    assert m.u ** 2 + m.w ** 2 == pytest.approx(v ** 2, rel=1e-12)


def test_residual_function_is_nonzero_off_root():
    m = solve_fundamental_mode(GEO, 1550.0)
    k0a = 2 * np.pi / 1550.0e-9 * m.core_radius_m
    v = k0a * np.sqrt(m.n_core ** 2 - m.n_clad ** 2)
    off = characteristic_residual(m.n_eff + 0.01, v, m.n_core, m.n_clad)
    assert abs(off) > 1e-4


def test_tangential_fields_continuous_across_boundary():
    """Ez and Ephi must be continuous at r=a; Er jumps by n_clad^2/n_core^2."""
    m = solve_fundamental_mode(GEO, 1550.0)
    eps = 1e-9
    er_in, ephi_in, ez_in, hr_in, hphi_in = _field_components(m, 1.0 - eps)
    er_out, ephi_out, ez_out, hr_out, hphi_out = _field_components(m, 1.0 + eps)
    assert ez_out == pytest.approx(ez_in, rel=1e-6)
    assert ephi_out == pytest.approx(ephi_in, rel=1e-6)
    assert hphi_out == pytest.approx(hphi_in, rel=1e-6)
    assert hr_out == pytest.approx(hr_in, rel=1e-6)
    # normal D continuous -> Er jump equals the inverse permittivity ratio
    assert er_out / er_in == pytest.approx(m.n_core ** 2 / m.n_clad ** 2,
                                           rel=1e-6)


@pytest.mark.parametrize("variant", sorted(AEFF_GOLDEN))
def test_effective_area_golden(variant):
    m = solve_fundamental_mode(GEO, 1550.0)
    assert effective_area(m, variant) == pytest.approx(AEFF_GOLDEN[variant],
                                                       rel=1e-6)


def test_default_effective_area_near_published_cross_section():
    m = solve_fundamental_mode(GEO, 1550.0)
    assert abs(effective_area(m) / 0.24 - 1.0) < 0.25


def test_nonlinear_gamma_near_published_value():
    gamma = nonlinear_gamma(1.1e-17, 1550.0, 0.24)
    assert abs(gamma / 188.0 - 1.0) < 0.02


def test_beta_derivatives_golden():
    d = beta_derivatives(GEO, 1550.0, max_order=3)
    m = solve_fundamental_mode(GEO, 1550.0)
    assert d[0] == pytest.approx(m.beta_per_m, rel=1e-12)
    assert d[1] == pytest.approx(BETA1_GOLDEN, rel=1e-6)
    assert d[2] == pytest.approx(BETA2_GOLDEN, rel=1e-3)
    assert d[2] < 0.0  # anomalous dispersion enables phasematching here


@pytest.mark.parametrize("lam", [1520.0, 1550.0, 1580.0])
def test_group_delay_positive(lam):
    d = beta_derivatives(GEO, lam, max_order=1)
    assert d[1] > 0.0
    # group index of a guided mode stays between phase index and core index
    ng = C_LIGHT * d[1]
    m = solve_fundamental_mode(GEO, lam)
    assert m.n_eff < ng < 4.0


def test_beta2_against_polynomial_fit_oracle():
    lam = np.linspace(1510.0, 1590.0, 41)
    omega = 2 * np.pi * C_LIGHT / (lam * 1e-9)
    beta = np.array([solve_fundamental_mode(GEO, round(x, 9)).beta_per_m
                     for x in lam])
    poly = np.polynomial.Polynomial.fit(omega, beta, 7)
    omega0 = 2 * np.pi * C_LIGHT / 1550.0e-9
    d = beta_derivatives(GEO, 1550.0, max_order=2)
    assert poly.deriv(1)(omega0) == pytest.approx(d[1], rel=1e-6)
    assert poly.deriv(2)(omega0) == pytest.approx(d[2], rel=1e-3)


def test_geometry_validation():
    with pytest.raises(ValueError):
        WaveguideGeometry(core_diameter_nm=50.0)
    with pytest.raises(ValueError):
        WaveguideGeometry(length_m=0.0)
    with pytest.raises(ValueError):
        WaveguideGeometry(propagation_loss_db_per_m=-1.0)


def test_loss_helpers():
    assert GEO.alpha_per_m == pytest.approx(5.1 * np.log(10.0) / 10.0,
                                            rel=1e-14)
    leff = GEO.effective_length_m()
    assert leff == pytest.approx(0.11192845989573114, rel=1e-9)
    assert leff < GEO.length_m
    lossless = WaveguideGeometry(propagation_loss_db_per_m=0.0)
    assert lossless.effective_length_m() == lossless.length_m


def test_wavelength_outside_material_window_raises():
    with pytest.raises(ValueError):
        solve_fundamental_mode(GEO, 900.0)
