"""Figure builders for scenario outputs.

Uses the Agg backend and strips the PNG Software tag so reruns with the
same inputs produce byte-identical image files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=130, metadata={"Software": None})
    plt.close(fig)


def _db(eff):
    eff = np.asarray(eff, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(eff)


def phasematch_figure(deg, nondeg, deg_pump_nm, nondeg_pumps_nm):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.0, 7.0), sharey=True)
    ax1.plot(deg["signal_nm"], _db(deg["efficiency"]), "C0-")
    ax1.axvline(deg_pump_nm, color="0.6", ls="--", lw=1)
    ax1.set_title(f"degenerate pump at {deg_pump_nm:g} nm")
    for ax, label in ((ax1, "seed wavelength (nm)"),
                      (ax2, "seed wavelength (nm)")):
        ax.set_xlabel(label)
        ax.set_ylabel("relative FWM efficiency (dB)")
        ax.set_ylim(-32, 2)
        ax.grid(alpha=0.3)
    ax2.plot(nondeg["signal_nm"], _db(nondeg["efficiency"]), "C1-")
    for p in nondeg_pumps_nm:
        ax2.axvline(p, color="0.6", ls="--", lw=1)
    ax2.set_title("non-degenerate pumps at "
                  f"{nondeg_pumps_nm[0]:g} / {nondeg_pumps_nm[1]:g} nm")
    fig.tight_layout()
    return fig


def seeded_figure(signal_nm, idler_dbm, pump_nm):
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    vals = np.asarray(idler_dbm, dtype=float)
    ok = np.isfinite(vals)
    ax.plot(np.asarray(signal_nm)[ok], vals[ok], "C0-")
    ax.axvline(pump_nm, color="0.6", ls="--", lw=1)
    ax.set_xlabel("seed wavelength (nm)")
    ax.set_ylabel("seeded idler power (dBm)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return fig


def pairs_figure(power_uw, mu, detected_per_s, inside_per_s):
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.loglog(power_uw, inside_per_s, "C0o-", label="inferred in wire")
    ax.loglog(power_uw, detected_per_s, "C1s-", label="detected")
    ax.set_xlabel("coupled average pump power (uW)")
    ax.set_ylabel("pair rate (1/s)")
    ax.grid(alpha=0.3, which="both")
    ax2 = ax.twinx()
    ax2.loglog(power_uw, mu, "C2--", label="pairs per pulse")
    ax2.set_ylabel("mean pairs per pulse")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="upper left")
    fig.tight_layout()
    return fig


def car_figure(power_uw, car_analytic, car_mc, car_err):
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.semilogx(power_uw, car_analytic, "C0-", label="model")
    mc = np.asarray(car_mc, dtype=float)
    ok = np.isfinite(mc)
    if np.any(ok):
        ax.errorbar(np.asarray(power_uw)[ok], mc[ok],
                    yerr=np.asarray(car_err, dtype=float)[ok],
                    fmt="C1o", capsize=3, label="Monte Carlo")
    ax.axhline(1.0, color="0.6", lw=1)
    ax.set_xlabel("coupled average pump power (uW)")
    ax.set_ylabel("CAR")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    return fig


def histogram_figure(centers_ns, normalized, normalized_noise_only):
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.step(centers_ns, np.maximum(normalized, 1e-3), where="mid",
            color="C0", label="pair channels")
    ax.step(centers_ns, np.maximum(normalized_noise_only, 1e-3), where="mid",
            color="k", lw=1, label="noise only")
    ax.set_yscale("log")
    ax.set_xlabel("signal-idler time offset (ns)")
    ax.set_ylabel("counts (accidental peak = 1)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def delay_figure(delay_ps, coincidences, accidentals, fit_curve=None):
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.plot(delay_ps, coincidences, "C0o", label="coincidences")
    ax.plot(delay_ps, accidentals, "C1s", label="accidentals (+1 period)")
    if fit_curve is not None:
        ax.plot(fit_curve[0], fit_curve[1], "C0-", lw=1,
                label="gaussian fit")
    ax.set_xlabel("pump-pump delay (ps)")
    ax.set_ylabel("counts per delay point")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def noise_figure(detuning_nm, raman_per_pulse, power_uw, budget):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.2))
    ax1.semilogy(detuning_nm, raman_per_pulse, "C0-")
    ax1.set_xlabel("detuning from pump (nm)")
    ax1.set_ylabel("Raman photons per pulse in 0.5 nm")
    ax1.grid(alpha=0.3)
    for key, style in (("raman_s_detected", "C0-"),
                       ("raman_i_detected", "C1-"),
                       ("leakage_s_detected", "C0--"),
                       ("leakage_i_detected", "C1--"),
                       ("pair_signal_detected", "C2-")):
        ax2.loglog(power_uw, budget[key], style, label=key)
    ax2.set_xlabel("coupled average pump power (uW)")
    ax2.set_ylabel("detected photons per pulse")
    ax2.grid(alpha=0.3, which="both")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    return fig


def fit_figure(series_list, model_curves):
    fig, axes = plt.subplots(1, len(series_list),
                             figsize=(5.0 * len(series_list), 4.2),
                             squeeze=False)
    for ax, series, (px, py) in zip(axes[0], series_list, model_curves):
        p_uw = np.asarray(series.powers_w) * 1e6
        ax.errorbar(p_uw, series.values, yerr=series.sigmas, fmt="C0o",
                    capsize=3, label="measured")
        ax.plot(np.asarray(px) * 1e6, py, "C1-", label="fitted model")
        ax.set_xscale("log")
        if series.kind == "pair_probability":
            ax.set_yscale("log")
            ax.set_ylabel("pair probability per pulse")
        else:
            ax.set_ylabel("CAR")
        ax.set_xlabel("coupled average pump power (uW)")
        ax.grid(alpha=0.3, which="both")
        ax.legend()
    fig.tight_layout()
    return fig
