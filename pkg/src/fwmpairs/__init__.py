"""Photon-pair generation by four-wave mixing in a tapered As2Se3 microwire.

Physics layers expose dispersion, phasematching, pair statistics and
detection; the harness layer (config, scenarios, cli) drives them from an
INI experiment description and writes CSV tables plus figures.
"""

__version__ = "0.1.0"

from .materials import AS2SE3, PMMA, refractive_index
from .modes import (ModeSolverError, WaveguideGeometry, beta_derivatives,
                    effective_area, nonlinear_gamma, solve_fundamental_mode)
from .fwm import (FilterChannel, NoiseModel, PhysicsValidityError, PumpConfig,
                  load_raman_table, pair_mean_per_pulse, phase_mismatch,
                  phasematch_spectrum, seeded_idler_power)
from .counting import (ChannelRates, DetectorModel, analytic_car,
                       assemble_channel_rates, car, gated_detector, histogram,
                       nfad_detector, pair_metrics, simulate_pulses)
from .calibration import FitError, FitResult, ForwardModel, fit, fit_delay_scan

__all__ = [
    "AS2SE3", "PMMA", "refractive_index",
    "ModeSolverError", "WaveguideGeometry", "beta_derivatives",
    "effective_area", "nonlinear_gamma", "solve_fundamental_mode",
    "FilterChannel", "NoiseModel", "PhysicsValidityError", "PumpConfig",
    "load_raman_table", "pair_mean_per_pulse", "phase_mismatch",
    "phasematch_spectrum", "seeded_idler_power",
    "ChannelRates", "DetectorModel", "analytic_car", "assemble_channel_rates",
    "car", "gated_detector", "histogram", "nfad_detector", "pair_metrics",
    "simulate_pulses",
    "FitError", "FitResult", "ForwardModel", "fit", "fit_delay_scan",
    "__version__",
]
