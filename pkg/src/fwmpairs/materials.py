"""Refractive-index models for the microwire core and cladding.

Dispersion is represented in Sellmeier form

    n^2(lambda) = 1 + sum_k B_k lambda^2 / (lambda^2 - C_k)

with lambda in um and C_k in um^2. Coefficients are hard-coded named
constants with their provenance; evaluation outside a material's stated
validity window raises rather than extrapolating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MaterialModel",
    "AS2SE3",
    "PMMA",
    "refractive_index",
]


@dataclass(frozen=True)
class MaterialModel:
    """Sellmeier dispersion model for one glass.

    Attributes:
        name: human-readable material name.
        sellmeier_b: dimensionless oscillator strengths B_k.
        sellmeier_c: resonance terms C_k in um^2.
        valid_range_nm: (min, max) wavelength window the fit is trusted over.
    """

    name: str
    sellmeier_b: tuple[float, ...]
    sellmeier_c: tuple[float, ...]
    valid_range_nm: tuple[float, float]

    def __post_init__(self):
        if len(self.sellmeier_b) != len(self.sellmeier_c):
            raise ValueError("sellmeier_b and sellmeier_c lengths differ")
        lo, hi = self.valid_range_nm
        if not lo < hi:
            raise ValueError("valid_range_nm must be increasing")


# As2Se3 core glass. Single-oscillator Sellmeier anchored to published
# dispersion data for bulk As2Se3 (Slusher et al., JOSA B 21, 1146 (2004):
# n = 2.81 at 1550 nm; long-wavelength index ~2.77 near 3 um). Resonance at
# 311 nm sits just above the ~700 nm band edge's absorption tail, which is
# outside the stated validity window anyway.
AS2SE3 = MaterialModel(
    name="As2Se3",
    sellmeier_b=(6.6176,),
    sellmeier_c=(0.0970,),
    valid_range_nm=(950.0, 3500.0),
)

# PMMA cladding. Two-term Sellmeier fitted to the dispersion formula of
# Kasarova et al., Opt. Mater. 29, 1481 (2007) over 1300-1800 nm
# (max |dn| of the refit < 5e-7 in that window; n = 1.4804 at 1550 nm).
PMMA = MaterialModel(
    name="PMMA",
    sellmeier_b=(1.18673617, 0.183035359),
    sellmeier_c=(0.0113471963, 652.256185),
    valid_range_nm=(1300.0, 1800.0),
)


def refractive_index(material: MaterialModel, wavelength_nm) -> float | np.ndarray:
    """Evaluate n(lambda) for a material.

    Args:
        material: Sellmeier model.
        wavelength_nm: scalar or array wavelength in nm.

    Returns:
        Refractive index, same shape as the input.

    Raises:
        ValueError: wavelength outside the material's validity window, or a
            non-positive wavelength.
    """
    lam = np.asarray(wavelength_nm, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    lo, hi = material.valid_range_nm
    if np.any(lam < lo) or np.any(lam > hi):
        raise ValueError(
            f"{material.name}: wavelength outside validity window "
            f"[{lo:g}, {hi:g}] nm"
        )
    l2 = (lam * 1e-3) ** 2  # um^2
    n2 = np.ones_like(l2)
    for b, c in zip(material.sellmeier_b, material.sellmeier_c):
        n2 = n2 + b * l2 / (l2 - c)
    n = np.sqrt(n2)
    return float(n) if np.isscalar(wavelength_nm) else n
