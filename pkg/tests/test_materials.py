"""Sellmeier material models: golden values, validity windows, identities."""

import numpy as np
import pytest

from fwmpairs.materials import AS2SE3, PMMA, MaterialModel, refractive_index


def test_as2se3_at_1550_matches_published_value():
    n = refractive_index(AS2SE3, 1550.0)
    assert n == pytest.approx(2.809986528391537, rel=1e-12)
    assert abs(n - 2.81) < 0.05


def test_pmma_at_1550_matches_published_value():
    n = refractive_index(PMMA, 1550.0)
    assert n == pytest.approx(1.4804361309204088, rel=1e-12)
    assert abs(n - 1.48) < 0.02


@pytest.mark.parametrize("material", [AS2SE3, PMMA])
def test_index_decreases_with_wavelength_in_band(material):
    # normal dispersion away from resonances
    lam = np.linspace(1500.0, 1600.0, 21)
    n = refractive_index(material, lam)
    assert np.all(np.diff(n) < 0)


@pytest.mark.parametrize("material,bad_nm", [
    (AS2SE3, 900.0),
    (AS2SE3, 3600.0),
    (PMMA, 1200.0),
    (PMMA, 1900.0),
])
def test_outside_validity_window_raises(material, bad_nm):
    with pytest.raises(ValueError):
        refractive_index(material, bad_nm)


def test_nonpositive_wavelength_raises():
    with pytest.raises(ValueError):
        refractive_index(AS2SE3, 0.0)
    with pytest.raises(ValueError):
        refractive_index(AS2SE3, -1550.0)


def test_array_evaluation_matches_scalar():
    lam = np.array([1500.0, 1550.0, 1600.0])
    n_arr = refractive_index(AS2SE3, lam)
    for lamk, nk in zip(lam, n_arr):
        assert nk == refractive_index(AS2SE3, float(lamk))


def test_single_term_sellmeier_identity():
    # with C = 0 the equation collapses to n = sqrt(1 + B) at any wavelength
    mat = MaterialModel(name="toy", sellmeier_b=(0.5,), sellmeier_c=(0.0,),
                        valid_range_nm=(100.0, 5000.0))
    for lam in (200.0, 1550.0, 4000.0):
        assert refractive_index(mat, lam) == pytest.approx(np.sqrt(1.5),
                                                           rel=1e-14)


def test_model_validation_rejects_mismatched_terms():
    with pytest.raises(ValueError):
        MaterialModel(name="bad", sellmeier_b=(1.0, 2.0),
                      sellmeier_c=(0.01,), valid_range_nm=(1000.0, 2000.0))
    with pytest.raises(ValueError):
        MaterialModel(name="bad", sellmeier_b=(1.0,), sellmeier_c=(0.01,),
                      valid_range_nm=(2000.0, 1000.0))
