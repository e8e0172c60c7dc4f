"""Four-wave-mixing engine: phasematching, seeded gain, pair rates, noise.

Conventions: wavelengths in nm at the API surface, powers in W, pulse
lengths in ps. Pump powers are the powers coupled into the microwire.
The pulsed pump is treated as quasi-CW rectangular: peak power equals
average power divided by (rep rate x effective pulse length).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.constants import c as C_LIGHT, h as H_PLANCK
from scipy.integrate import simpson

from .modes import (WaveguideGeometry, effective_area, nonlinear_gamma,
                    solve_fundamental_mode)

__all__ = [
    "N2_AS2SE3",
    "PumpConfig",
    "FilterChannel",
    "FwmSpectrum",
    "NoiseModel",
    "PhysicsValidityError",
    "gamma_for",
    "phase_mismatch",
    "seeded_idler_power",
    "phasematch_spectrum",
    "phasematch_integral",
    "pair_mean_per_pulse",
    "polarization_factor",
    "pump_overlap_factor",
    "load_raman_table",
    "raman_noise_mean",
    "pump_leakage_mean",
    "microwire_escape_fraction",
]

# Kerr index of As2Se3 near 1550 nm (Slusher et al., JOSA B 21, 1146 (2004))
N2_AS2SE3 = 1.1e-17  # m^2/W

GAUSS_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


class PhysicsValidityError(RuntimeError):
    """Model pushed outside its validity range (maps to CLI exit code 3)."""


@dataclass(frozen=True)
class PumpConfig:
    """One pump field at the microwire input.

    average_power_w is the power coupled into the microwire. pulsed=False
    treats the pump as CW (peak power equals average power; rep_rate is
    still used for per-pulse noise bookkeeping).
    """

    wavelength_nm: float
    average_power_w: float
    pulse_fwhm_ps: float = 25.0
    rep_rate_hz: float = 76e6
    pulsed: bool = True
    polarization: str = "H"

    def __post_init__(self):
        if self.average_power_w < 0:
            raise ValueError("average_power_w must be non-negative")
        if self.pulsed and (self.pulse_fwhm_ps <= 0 or self.rep_rate_hz <= 0):
            raise ValueError("pulsed pump needs positive pulse_fwhm_ps "
                             "and rep_rate_hz")

    def peak_power_w(self) -> float:
        if not self.pulsed:
            return self.average_power_w
        duty = self.rep_rate_hz * self.pulse_fwhm_ps * 1e-12
        return self.average_power_w / duty

    def photons_per_pulse(self) -> float:
        e_photon = H_PLANCK * C_LIGHT / (self.wavelength_nm * 1e-9)
        return self.average_power_w / self.rep_rate_hz / e_photon


@dataclass(frozen=True)
class FilterChannel:
    """Rectangular collection filter in front of one detector."""

    center_nm: float
    bandwidth_nm: float
    insertion_loss_db: float = 0.0
    pump_isolation_db: float = 120.0

    def __post_init__(self):
        if self.bandwidth_nm <= 0:
            raise ValueError("bandwidth_nm must be positive")
        if self.insertion_loss_db < 0 or self.pump_isolation_db < 0:
            raise ValueError("losses must be non-negative")

    def contains(self, wavelength_nm) -> np.ndarray:
        return np.abs(np.asarray(wavelength_nm) - self.center_nm) \
            <= 0.5 * self.bandwidth_nm


@dataclass
class FwmSpectrum:
    """Scan of phasematching efficiency versus signal wavelength."""

    signal_nm: np.ndarray
    idler_nm: np.ndarray
    delta_beta_per_m: np.ndarray
    efficiency: np.ndarray        # normalized to the scan maximum
    idler_power_w: np.ndarray     # seeded scan output (absolute)

    def efficiency_db(self) -> np.ndarray:
        floor = 1e-12
        return 10.0 * np.log10(np.maximum(self.efficiency, floor))

    def main_lobe_fwhm_nm(self) -> float:
        """Full width at half maximum of the lobe around the scan peak."""
        eff = self.efficiency
        lam = self.signal_nm
        ipk = int(np.argmax(eff))
        half = 0.5 * eff[ipk]

        def cross(side):
            idx = ipk
            while 0 <= idx + side < len(eff):
                nxt = idx + side
                if eff[nxt] <= half:
                    frac = (eff[idx] - half) / (eff[idx] - eff[nxt])
                    return lam[idx] + frac * (lam[nxt] - lam[idx])
                idx = nxt
            return lam[idx]

        return abs(cross(+1) - cross(-1))


def gamma_for(geometry: WaveguideGeometry, wavelength_nm: float,
              aeff_um2: float | None = None) -> float:
    """Nonlinear parameter (1/(W m)) at a wavelength.

    aeff_um2=None computes the effective area from the solved mode;
    passing a number (e.g. a tabulated constant) overrides it.
    """
    if aeff_um2 is None:
        mode = solve_fundamental_mode(geometry, wavelength_nm)
        aeff_um2 = effective_area(mode)
    return nonlinear_gamma(N2_AS2SE3, wavelength_nm, aeff_um2)


def phase_mismatch(geometry: WaveguideGeometry, pump1_nm: float,
                   pump2_nm: float, signal_nm: float) -> tuple[float, float]:
    """Linear phase mismatch for one FWM quartet.

    The idler wavelength follows from energy conservation
    1/l_i = 1/l_p1 + 1/l_p2 - 1/l_s.

    Returns:
        (delta_beta in rad/m, idler wavelength in nm).

    Raises:
        ValueError: the implied idler is non-positive or outside the
            material validity window.
    """
    inv_idler = 1.0 / pump1_nm + 1.0 / pump2_nm - 1.0 / signal_nm
    if inv_idler <= 0.0:
        raise ValueError("energy conservation gives a non-positive idler "
                         f"frequency for signal {signal_nm:g} nm")
    idler_nm = 1.0 / inv_idler
    beta = {}
    for lam in (signal_nm, idler_nm, pump1_nm, pump2_nm):
        beta[lam] = solve_fundamental_mode(geometry, round(lam, 9)).beta_per_m
    dbeta = (beta[signal_nm] + beta[idler_nm]
             - beta[pump1_nm] - beta[pump2_nm])
    return float(dbeta), float(idler_nm)


def _sinc_sq(x: np.ndarray) -> np.ndarray:
    # sinc^2 with sinc(x) = sin(x)/x
    return np.sinc(np.asarray(x) / np.pi) ** 2


def seeded_idler_power(geometry: WaveguideGeometry, pump1: PumpConfig,
                       pump2: PumpConfig, seed_power_w: float,
                       signal_nm: float,
                       aeff_um2: float | None = None) -> float:
    """Idler power generated by seeded FWM (low-gain limit).

    P_i = (gamma sqrt(P1 P2) L_eff)^2 sinc^2(kappa L / 2) P_seed e^(-alpha L)
    with kappa = delta_beta + gamma (P1 + P2) including the pump-induced
    nonlinear phase. Warns (without aborting) when the parametric gain
    leaves the low-gain regime.
    """
    if seed_power_w < 0:
        raise ValueError("seed_power_w must be non-negative")
    p1 = pump1.peak_power_w()
    p2 = pump2.peak_power_w()
    gamma = gamma_for(geometry, pump1.wavelength_nm, aeff_um2)
    dbeta, _ = phase_mismatch(geometry, pump1.wavelength_nm,
                              pump2.wavelength_nm, signal_nm)
    leff = geometry.effective_length_m()
    gain = gamma * np.sqrt(p1 * p2) * leff
    if gain >= 0.3:
        warnings.warn(f"parametric gain {gain:.2f} outside the low-gain "
                      "regime; seeded result is perturbative", RuntimeWarning)
    kappa = dbeta + gamma * (p1 + p2)
    loss = np.exp(-geometry.alpha_per_m * geometry.length_m)
    return float(gain ** 2 * _sinc_sq(kappa * geometry.length_m / 2.0)
                 * seed_power_w * loss)


def phasematch_spectrum(geometry: WaveguideGeometry, pump1: PumpConfig,
                        pump2: PumpConfig, signal_nm: np.ndarray,
                        seed_power_w: float = 190e-6,
                        aeff_um2: float | None = None) -> FwmSpectrum:
    """Seeded-FWM scan over signal wavelengths (phasematching curve)."""
    signal_nm = np.asarray(signal_nm, dtype=float)
    p1 = pump1.peak_power_w()
    p2 = pump2.peak_power_w()
    gamma = gamma_for(geometry, pump1.wavelength_nm, aeff_um2)
    leff = geometry.effective_length_m()
    loss = np.exp(-geometry.alpha_per_m * geometry.length_m)
    gain = gamma * np.sqrt(p1 * p2) * leff

    idler = np.empty_like(signal_nm)
    dbeta = np.empty_like(signal_nm)
    for i, lam in enumerate(signal_nm):
        dbeta[i], idler[i] = phase_mismatch(
            geometry, pump1.wavelength_nm, pump2.wavelength_nm, float(lam))
    kappa = dbeta + gamma * (p1 + p2)
    power = gain ** 2 * _sinc_sq(kappa * geometry.length_m / 2.0) \
        * seed_power_w * loss
    peak = float(np.max(power))
    eff = power / peak if peak > 0 else np.zeros_like(power)
    return FwmSpectrum(signal_nm=signal_nm, idler_nm=idler,
                       delta_beta_per_m=dbeta, efficiency=eff,
                       idler_power_w=power)


def phasematch_integral(geometry: WaveguideGeometry, pump1: PumpConfig,
                        pump2: PumpConfig, signal_filter: FilterChannel,
                        idler_filter: FilterChannel | None = None,
                        points: int = 65) -> float:
    """Integral of sinc^2(delta_beta L / 2) over the signal filter (Hz).

    With idler_filter given, frequencies whose energy-conserving partner
    falls outside that filter contribute zero (joint collection).
    """
    lo = signal_filter.center_nm - 0.5 * signal_filter.bandwidth_nm
    hi = signal_filter.center_nm + 0.5 * signal_filter.bandwidth_nm
    nu_hi = C_LIGHT / (lo * 1e-9)
    nu_lo = C_LIGHT / (hi * 1e-9)
    nu = np.linspace(nu_lo, nu_hi, points)
    lam_nm = C_LIGHT / nu * 1e9
    vals = np.empty_like(nu)
    for i, lam in enumerate(lam_nm):
        dbeta, idler = phase_mismatch(geometry, pump1.wavelength_nm,
                                      pump2.wavelength_nm, float(lam))
        v = _sinc_sq(dbeta * geometry.length_m / 2.0)
        if idler_filter is not None and not idler_filter.contains(idler):
            v = 0.0
        vals[i] = v
    return float(simpson(vals, x=nu))


def pair_mean_per_pulse(geometry: WaveguideGeometry, pump1: PumpConfig,
                        pump2: PumpConfig, signal_filter: FilterChannel,
                        idler_filter: FilterChannel | None = None,
                        aeff_um2: float | None = None,
                        phi_prefactor: float = 1.0,
                        pol_factor: float = 1.0,
                        overlap_factor: float = 1.0) -> float:
    """Mean photon pairs per pulse collected in the signal filter.

    mu = (gamma sqrt(P1pk P2pk) L_eff)^2 * Phi, with
    Phi = phi_prefactor * tau_eff * integral_filter sinc^2(db L/2) dnu,
    scaled by the polarization and pump-overlap factors. Flags model
    breakdown (mu > 0.5) with a warning; callers that cannot tolerate the
    breakdown raise on it.
    """
    p1 = pump1.peak_power_w()
    p2 = pump2.peak_power_w()
    gamma = gamma_for(geometry, pump1.wavelength_nm, aeff_um2)
    leff = geometry.effective_length_m()
    tau_eff = np.sqrt(pump1.pulse_fwhm_ps * pump2.pulse_fwhm_ps) * 1e-12
    phi = phi_prefactor * tau_eff * phasematch_integral(
        geometry, pump1, pump2, signal_filter, idler_filter)
    mu = (gamma * np.sqrt(p1 * p2) * leff) ** 2 * phi \
        * pol_factor * overlap_factor
    if mu > 0.5:
        warnings.warn(f"pair mean {mu:.3f} per pulse exceeds 0.5; "
                      "multi-pair model validity is degraded", RuntimeWarning)
    return float(mu)


def polarization_factor(pol1: str, pol2: str) -> float:
    """Relative FWM strength: 1 for copolarized pumps, 4/9 crosspolarized."""
    return 1.0 if pol1 == pol2 else 4.0 / 9.0


def pump_overlap_factor(pump1: PumpConfig, pump2: PumpConfig,
                        delta_t_ps: float) -> float:
    """Temporal overlap of two gaussian pump pulses offset by delta_t.

    exp(-dt^2 / (2 (s1^2 + s2^2))) with s the gaussian sigma of each pulse;
    the factor versus delay has FWHM sqrt(t1^2 + t2^2).
    """
    s1 = pump1.pulse_fwhm_ps * GAUSS_FWHM_TO_SIGMA
    s2 = pump2.pulse_fwhm_ps * GAUSS_FWHM_TO_SIGMA
    return float(np.exp(-delta_t_ps ** 2 / (2.0 * (s1 ** 2 + s2 ** 2))))


@dataclass(frozen=True)
class NoiseModel:
    """Spontaneous Raman scattering plus residual pump leakage.

    raman_rate_ref: photons per pulse per nm generated in the microwire at
    the table's peak multiplier when pumping with reference_power_w average
    power. The tabulated spectral shape carries the detuning dependence and
    is never extrapolated.
    """

    raman_detuning_nm: tuple[float, ...]
    raman_multiplier: tuple[float, ...]
    raman_rate_ref: float
    reference_power_w: float = 1e-6
    enabled: bool = True
    include_leakage: bool = True

    def __post_init__(self):
        det = np.asarray(self.raman_detuning_nm)
        mult = np.asarray(self.raman_multiplier)
        if det.size != mult.size or det.size < 2:
            raise ValueError("raman table needs matching detuning and "
                             "multiplier columns")
        if np.any(np.diff(det) <= 0):
            raise ValueError("raman detunings must be strictly increasing")
        if np.any(mult < 0) or np.any(mult > 1):
            raise ValueError("raman multipliers must lie in [0, 1]")
        if self.raman_rate_ref < 0 or self.reference_power_w <= 0:
            raise ValueError("raman reference rate/power invalid")

    def multiplier(self, detuning_nm: float) -> float:
        det = np.asarray(self.raman_detuning_nm)
        if detuning_nm < det[0] or detuning_nm > det[-1]:
            raise ValueError(
                f"detuning {detuning_nm:g} nm outside the tabulated Raman "
                f"range [{det[0]:g}, {det[-1]:g}] nm; refusing to "
                "extrapolate")
        return float(np.interp(detuning_nm, det,
                               np.asarray(self.raman_multiplier)))


def load_raman_table(path=None) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Read a Raman spectral-shape table (columns detuning_nm, multiplier)."""
    if path is None:
        ref = resources.files("fwmpairs.data").joinpath("raman_shape.csv")
        with ref.open("r", encoding="utf-8") as fh:
            return _parse_raman_rows(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return _parse_raman_rows(fh)


def _parse_raman_rows(fh):
    rows = [r for r in csv.reader(line for line in fh
                                  if not line.startswith("#"))]
    if not rows or [c.strip() for c in rows[0]] != ["detuning_nm",
                                                    "multiplier"]:
        raise ValueError("raman table must have header 'detuning_nm,"
                         "multiplier'")
    det, mult = [], []
    for r in rows[1:]:
        if not r:
            continue
        det.append(float(r[0]))
        mult.append(float(r[1]))
    return tuple(det), tuple(mult)


def raman_noise_mean(noise: NoiseModel, pump: PumpConfig,
                     channel: FilterChannel) -> float:
    """Mean spontaneous-Raman photons per pulse scattered into a channel.

    Linear in pump average power; spectral shape from the tabulated
    multiplier at the channel's detuning from this pump.
    """
    if not noise.enabled:
        return 0.0
    detuning = channel.center_nm - pump.wavelength_nm
    mult = noise.multiplier(detuning)
    scale = pump.average_power_w / noise.reference_power_w
    return noise.raman_rate_ref * scale * mult * channel.bandwidth_nm


def pump_leakage_mean(pump: PumpConfig, channel: FilterChannel) -> float:
    """Residual pump photons per pulse reaching the detector after isolation."""
    return pump.photons_per_pulse() * 10.0 ** (-channel.pump_isolation_db
                                               / 10.0)


def microwire_escape_fraction(geometry: WaveguideGeometry,
                              exact: bool = False) -> float:
    """Transmission of a pair photon from its birthplace to the wire end.

    Default approximates all pairs as born mid-wire: exp(-alpha L / 2).
    exact=True averages over a uniform birth position, giving
    (1 - e^(-alpha L)) / (alpha L); the two differ by well under 1% for
    alpha L ~ 0.14.
    """
    al = geometry.alpha_per_m * geometry.length_m
    if not exact:
        return float(np.exp(-0.5 * al))
    if al == 0:
        return 1.0
    return float((1.0 - np.exp(-al)) / al)
