"""End-to-end acceptance criteria for the pair-source simulator.

Each test implements one numbered criterion and prints a single
"criterion NN PASS" line with the measured values when it holds.
MC checks run at fixed seeds so outcomes are reproducible.
"""

import dataclasses
import math
import pathlib
import warnings
from importlib import resources

import numpy as np
import pytest
from scipy.optimize import OptimizeWarning

from fwmpairs.calibration import ForwardModel, MeasurementSeries, fit, \
    fit_delay_scan
from fwmpairs.config import load_config, replace_run
from fwmpairs.counting import (analytic_car, car, pair_metrics,
                               simulate_pulses)
from fwmpairs.materials import AS2SE3, PMMA, refractive_index
from fwmpairs.modes import (effective_area, nonlinear_gamma,
                            solve_fundamental_mode)
from fwmpairs.fwm import PumpConfig, phasematch_spectrum
from fwmpairs.scenarios import rates_for, read_scenario_csv, run_scenario

from fd_oracle import fd_neff

DEFAULT_INI = str(resources.files("fwmpairs.data") / "default.ini")
NONDEG_INI = str(resources.files("fwmpairs.data") / "nondegenerate.ini")
REFERENCE_DIR = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def default_cfg():
    return load_config(DEFAULT_INI)


@pytest.fixture(scope="module")
def nondeg_cfg():
    return load_config(NONDEG_INI)


def _excess_counts(records, true_offset_ns, rep_period_ns, window_ns=2.0):
    off = records["idler_time_offset"][records["idler_detected"]]
    half = window_ns / 2.0
    c = int(np.count_nonzero(np.abs(off - true_offset_ns) <= half))
    a = int(np.count_nonzero(
        np.abs(off - (true_offset_ns - rep_period_ns)) <= half))
    return c, a


def _trace_fwhm(lam, eff):
    """FWHM of the lobe around the trace maximum (linear interpolation)."""
    ipk = int(np.argmax(eff))
    half = 0.5 * eff[ipk]

    def cross(side):
        i = ipk
        while 0 <= i + side < len(eff):
            j = i + side
            if eff[j] <= half:
                frac = (eff[i] - half) / (eff[i] - eff[j])
                return lam[i] + frac * (lam[j] - lam[i])
            i = j
        return lam[i]

    return abs(cross(+1) - cross(-1))


def test_criterion_01_nonlinear_parameter(default_cfg):
    mode = solve_fundamental_mode(default_cfg.geometry, 1550.0)
    gamma = nonlinear_gamma(n2_m2_per_w=1.1e-17, wavelength_nm=1550.0,
                            aeff_um2=default_cfg.aeff_override_um2)
    rel = abs(gamma - 188.0) / 188.0
    assert rel < 0.02, f"gamma {gamma:.2f} /W/m vs 188 ({rel:.1%})"
    # sanity: the computed mode area is of the same scale as the
    # calibrated override
    assert 0.15 < effective_area(mode) < 0.45
    print(f"criterion 01 PASS: gamma = {gamma:.2f} /W/m, "
          f"{rel:.2%} from 188 /W/m")


def test_criterion_02_mode_solver_against_fd_oracle(default_cfg):
    geom = default_cfg.geometry
    lam = 1550.0
    mode = solve_fundamental_mode(geom, lam)
    n1 = refractive_index(AS2SE3, lam)
    n2 = refractive_index(PMMA, lam)
    a = 0.5 * geom.core_diameter_nm * 1e-9

    def eps_fn(x, y):
        return np.where(x ** 2 + y ** 2 <= a ** 2, n1 ** 2, n2 ** 2)

    fd = fd_neff(eps_fn, lam * 1e-9, window_m=3.0e-6, n_grid=160,
                 sigma_guess=n1 ** 2 + 0.05)
    rel = abs(mode.n_eff - fd) / fd
    assert rel < 0.01, f"n_eff {mode.n_eff} vs FD {fd}"

    # physical bound invariants across the band of interest
    for wl in (1500.0, 1525.0, 1550.0, 1575.0, 1600.0):
        m = solve_fundamental_mode(geom, wl)
        assert refractive_index(PMMA, wl) < m.n_eff \
            < refractive_index(AS2SE3, wl)

    # bulk limit: a huge core must push n_eff onto the core index
    bulk = dataclasses.replace(geom, core_diameter_nm=50_000.0)
    gap = n1 - solve_fundamental_mode(bulk, lam).n_eff
    assert 0.0 < gap < 1e-3, f"bulk-limit gap {gap}"
    print(f"criterion 02 PASS: n_eff = {mode.n_eff:.6f} vs FD {fd:.6f} "
          f"(rel {rel:.2e}), bulk gap {gap:.2e}")


def test_criterion_03_phasematching_curves(default_cfg):
    geom = default_cfg.geometry
    scan = dict(default_cfg.scan)
    power = scan["phasematch_power_w"]

    def cw(nm):
        return PumpConfig(wavelength_nm=nm, average_power_w=power,
                          pulse_fwhm_ps=25.0, rep_rate_hz=76e6,
                          pulsed=False)

    cases = (
        ("degenerate", "phasematch_degenerate_reference.csv",
         (scan["phasematch_pump_nm"], scan["phasematch_pump_nm"]),
         scan["phasematch_start_nm"], scan["phasematch_stop_nm"],
         scan["phasematch_points"]),
        ("nondegenerate", "phasematch_nondegenerate_reference.csv",
         (scan["nondeg_pump1_nm"], scan["nondeg_pump2_nm"]),
         scan["nondeg_start_nm"], scan["nondeg_stop_nm"],
         scan["nondeg_points"]),
    )
    widths = {}
    for label, ref_name, pumps, lo, hi, n in cases:
        grid = np.linspace(lo, hi, int(n))
        spec = phasematch_spectrum(geom, cw(pumps[0]), cw(pumps[1]), grid,
                                   seed_power_w=power,
                                   aeff_um2=default_cfg.aeff_override_um2)
        ref, _ = read_scenario_csv(REFERENCE_DIR / ref_name)
        ref_w = _trace_fwhm(ref["signal_nm"], ref["efficiency"])
        new_w = _trace_fwhm(spec.signal_nm, spec.efficiency)
        assert abs(new_w - ref_w) / ref_w < 0.20, \
            f"{label}: width {new_w:.2f} nm vs reference {ref_w:.2f} nm"
        widths[label] = (new_w, ref_w)

        # invariants: energy conservation row by row, normalized peak,
        # and mismatch growing away from the peak
        inv_sum = 1.0 / pumps[0] + 1.0 / pumps[1]
        recon = 1.0 / (inv_sum - 1.0 / spec.signal_nm)
        assert np.allclose(recon, spec.idler_nm, rtol=1e-12)
        assert spec.efficiency.max() == pytest.approx(1.0)
        ipk = int(np.argmax(spec.efficiency))
        absdb = np.abs(spec.delta_beta_per_m)
        if ipk > 2:
            assert absdb[0] > absdb[ipk]
        if ipk < len(absdb) - 3:
            assert absdb[-1] > absdb[ipk]

    print("criterion 03 PASS: lobe widths "
          + ", ".join(f"{k} {v[0]:.2f} nm (ref {v[1]:.2f} nm)"
                      for k, v in widths.items()))


def test_criterion_04_car_versus_power(default_cfg):
    cfg = default_cfg
    dets = (cfg.signal_detector, cfg.idler_detector)
    powers_uw = cfg.scan_value("powers_uw")
    curve = [analytic_car(rates_for(cfg, power_w=p * 1e-6), dets)
             for p in powers_uw]

    k = int(np.argmax(curve))
    assert 0 < k < len(curve) - 1, "CAR maximum sits on the scan edge"
    assert all(a < b for a, b in zip(curve[:k], curve[1:k + 1]))
    assert all(a > b for a, b in zip(curve[k:], curve[k + 1:]))
    assert 1.9 <= curve[k] <= 2.4, f"peak CAR {curve[k]:.3f}"
    assert 3.2 / 2.0 <= powers_uw[k] <= 3.2 * 2.0, \
        f"peak at {powers_uw[k]} uW"
    low = curve[powers_uw.index(0.49)]
    assert 1.1 <= low <= 1.9, f"CAR(0.49 uW) = {low:.3f}"

    # MC consistency at the operating power and at the lowest published
    # power; the low-power point needs heavy statistics because
    # accidentals are then very rare
    t0 = cfg.idler_detector.electronic_delay_ns
    zs = {}
    for p_uw, n, seed in ((3.2, 100_000_000, 42), (0.49, 400_000_000, 42)):
        rates = rates_for(cfg, power_w=p_uw * 1e-6)
        rec = simulate_pulses(rates, dets, n, seed=seed,
                              block_size=1_000_000)
        value, err = car(rec, true_offset_ns=t0,
                         rep_period_ns=rates.rep_period_ns)
        expected = analytic_car(rates, dets)
        zs[p_uw] = (value - expected) / err
        assert abs(zs[p_uw]) < 3.0, \
            f"MC CAR at {p_uw} uW: {value:.2f}+-{err:.2f} vs {expected:.2f}"
    print(f"criterion 04 PASS: peak CAR {curve[k]:.3f} at "
          f"{powers_uw[k]:.1f} uW, CAR(0.49 uW) {low:.3f}, MC z "
          + ", ".join(f"{p} uW {z:+.2f}" for p, z in zs.items()))


def test_criterion_05_pair_rate_power_scaling(default_cfg):
    cfg = default_cfg
    powers_uw = np.asarray(cfg.scan_value("powers_uw"))
    mus = np.array([rates_for(cfg, power_w=p * 1e-6).mu_pair
                    for p in powers_uw])
    slope = np.polyfit(np.log(powers_uw), np.log(mus), 1)[0]
    assert abs(slope - 2.0) < 1e-3, f"analytic slope {slope}"

    # the MC slope check removes the signal dead time, which otherwise
    # saturates the detected rate at these powers; saturation itself is
    # asserted below on the full detector model
    det_s = dataclasses.replace(cfg.signal_detector, dead_time_ns=0.0)
    dets = (det_s, cfg.idler_detector)
    t0 = cfg.idler_detector.electronic_delay_ns
    excesses = {}
    for p_uw in (3.2, 9.6):
        rates = rates_for(cfg, power_w=p_uw * 1e-6)
        rec = simulate_pulses(rates, dets, 200_000_000, seed=31,
                              block_size=1_000_000)
        c, a = _excess_counts(rec, t0, rates.rep_period_ns)
        excesses[p_uw] = c - a
    mc_slope = math.log(excesses[9.6] / excesses[3.2]) / math.log(3.0)
    assert abs(mc_slope - 2.0) < 0.35, f"MC slope {mc_slope:.3f}"

    # dead-time concavity: with the real 10 us dead time the detected
    # rate grows sublinearly in mu at high power
    full = (cfg.signal_detector, cfg.idler_detector)
    det_rate = [pair_metrics(rates_for(cfg, power_w=p * 1e-6), full,
                             average_power_w=p * 1e-6)
                ["pairs_per_s_detected"] for p in (8.0, 16.0, 32.0)]
    g1 = det_rate[1] / det_rate[0]
    g2 = det_rate[2] / det_rate[1]
    assert g2 < g1 < 4.0
    print(f"criterion 05 PASS: analytic slope {slope:.6f}, MC slope "
          f"{mc_slope:.3f}, detected-rate growth {g1:.2f}x then {g2:.2f}x "
          f"per power doubling")


def test_criterion_06_mc_car_against_closed_form():
    from fwmpairs.counting import ChannelRates, DetectorModel
    rng = np.random.default_rng(20260816)
    zs = []
    for k in range(20):
        rates = ChannelRates(
            mu_pair=float(rng.uniform(0.002, 0.05)),
            raman_s=float(rng.uniform(0.005, 0.08)),
            raman_i=float(rng.uniform(0.005, 0.08)),
            leakage_s=float(rng.uniform(0.0, 2e-4)),
            leakage_i=float(rng.uniform(0.0, 2e-4)),
            eta_s=float(rng.uniform(0.15, 0.6)),
            eta_i=float(rng.uniform(0.15, 0.6)),
            rep_rate_hz=76e6,
            pair_statistics="thermal" if k % 2 == 0 else "poisson")
        det_s = DetectorModel(kind="free_running",
                              efficiency=float(rng.uniform(0.3, 0.8)),
                              dark_rate_cps=float(rng.uniform(0.0, 500.0)),
                              dead_time_ns=0.0)
        det_i = DetectorModel(kind="gated",
                              efficiency=float(rng.uniform(0.3, 0.8)),
                              dark_prob_per_gate=float(
                                  rng.uniform(0.0, 0.01)),
                              gate_width_ns=50.0, electronic_delay_ns=22.0)
        rec = simulate_pulses(rates, (det_s, det_i), 1_000_000,
                              seed=int(rng.integers(1 << 30)))
        value, err = car(rec, true_offset_ns=22.0,
                         rep_period_ns=1e9 / 76e6)
        zs.append((value - analytic_car(rates, (det_s, det_i))) / err)
    worst = max(abs(z) for z in zs)
    assert worst < 3.0, f"worst |z| = {worst:.2f}"
    print(f"criterion 06 PASS: 20 random parameter sets, worst |z| = "
          f"{worst:.2f}")


def test_criterion_07_cross_polarized_pump_ratio(nondeg_cfg):
    cfg = nondeg_cfg
    cross_cfg = dataclasses.replace(
        cfg, pumps=(cfg.pumps[0],
                    dataclasses.replace(cfg.pumps[1], polarization="V")))
    # noise channels off and efficiencies raised: the criterion weighs
    # the polarization dependence of pair production, so the cleanest
    # measurement removes the uncorrelated background
    det_s = dataclasses.replace(cfg.signal_detector, efficiency=0.6,
                                dead_time_ns=0.0, dark_rate_cps=0.0)
    det_i = dataclasses.replace(cfg.idler_detector, efficiency=0.6,
                                dark_prob_per_gate=0.0)
    dets = (det_s, det_i)
    t0 = cfg.idler_detector.electronic_delay_ns

    def clean(rates):
        return dataclasses.replace(rates, eta_s=0.5, eta_i=0.5,
                                   raman_s=0.0, raman_i=0.0,
                                   leakage_s=0.0, leakage_i=0.0)

    out = {}
    for name, c in (("co", cfg), ("cross", cross_cfg)):
        rates = clean(rates_for(c))
        rec = simulate_pulses(rates, dets, 10_000_000, seed=2025,
                              block_size=1_000_000)
        cnt, acc = _excess_counts(rec, t0, rates.rep_period_ns)
        out[name] = (cnt - acc, cnt + acc, rates.mu_pair)

    assert out["cross"][2] / out["co"][2] == pytest.approx(4.0 / 9.0,
                                                           rel=1e-12)
    ratio = out["cross"][0] / out["co"][0]
    sigma = ratio * math.sqrt(out["cross"][1] / out["cross"][0] ** 2
                              + out["co"][1] / out["co"][0] ** 2)
    z = (ratio - 4.0 / 9.0) / sigma
    assert abs(z) < 3.0, f"ratio {ratio:.4f} +- {sigma:.4f}"
    assert sigma / ratio < 0.05  # the check must have resolving power
    print(f"criterion 07 PASS: detected cross/co = {ratio:.4f} +- "
          f"{sigma:.4f} vs 4/9 = {4/9:.4f} (z = {z:+.2f})")


def test_criterion_08_pump_delay_scan(nondeg_cfg, tmp_path):
    run_scenario("delay-scan", nondeg_cfg, tmp_path)
    data, _ = read_scenario_csv(tmp_path / "delay_scan.csv")
    predicted = math.hypot(nondeg_cfg.pumps[0].pulse_fwhm_ps,
                           nondeg_cfg.pumps[1].pulse_fwhm_ps)

    # deterministic model curve carries the width contract
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        model_fit = fit_delay_scan(data["delay_ps"],
                                   data["pred_coincidences"])
    rel = abs(model_fit["fwhm_ps"] - predicted) / predicted
    assert rel < 0.05, f"model width {model_fit['fwhm_ps']:.2f} ps"

    # MC coincidences agree with that width within their statistics
    mc_fit = fit_delay_scan(
        data["delay_ps"], data["coincidences"],
        sigmas=np.sqrt(np.maximum(data["coincidences"], 1.0)))
    z_w = (mc_fit["fwhm_ps"] - predicted) / mc_fit["fwhm_ps_err"]
    assert abs(z_w) < 3.0

    # accidentals rise when the pulses overlap (multi-pair emission);
    # the MC must match the prediction in both regions
    d = data["delay_ps"]
    acc, pred = data["accidentals"], data["pred_accidentals"]
    inner = np.abs(d) <= 17.5
    outer = np.abs(d) >= 45.0
    rise = pred[inner].mean() / pred[outer].mean()
    assert rise > 1.05, f"predicted accidental rise {rise:.3f}"
    z_in = (acc[inner].sum() - pred[inner].sum()) \
        / math.sqrt(pred[inner].sum())
    z_out = (acc[outer].sum() - pred[outer].sum()) \
        / math.sqrt(pred[outer].sum())
    assert abs(z_in) < 3.0 and abs(z_out) < 3.0
    print(f"criterion 08 PASS: model width {model_fit['fwhm_ps']:.2f} ps "
          f"vs sqrt-sum {predicted:.2f} ps ({rel:.1%}), MC width "
          f"{mc_fit['fwhm_ps']:.1f} +- {mc_fit['fwhm_ps_err']:.1f} ps, "
          f"accidental rise {rise:.2f} (z_in {z_in:+.2f})")


def test_criterion_09_energy_non_conserving_channel(default_cfg):
    cfg = default_cfg
    off_nm = cfg.scan_value("noise_only_idler_nm")
    flt = dataclasses.replace(cfg.idler_filter, center_nm=off_nm)
    rates = rates_for(cfg, idler_filter=flt)
    assert rates.mu_pair == 0.0  # no conjugate overlap, no pairs
    dets = (cfg.signal_detector, cfg.idler_detector)
    rec = simulate_pulses(rates, dets, 100_000_000, seed=77,
                          block_size=1_000_000)
    value, err = car(rec, true_offset_ns=cfg.idler_detector
                     .electronic_delay_ns,
                     rep_period_ns=rates.rep_period_ns)
    z = (value - 1.0) / err
    assert abs(z) < 3.0, f"noise-only CAR {value:.2f} +- {err:.2f}"
    print(f"criterion 09 PASS: idler at {off_nm} nm gives CAR = "
          f"{value:.2f} +- {err:.2f} (z = {z:+.2f} vs 1)")


def test_criterion_10_pulse_length_fit(default_cfg, tmp_path):
    cfg = default_cfg
    base = rates_for(cfg)
    dets = (cfg.signal_detector, cfg.idler_detector)
    model = ForwardModel(base=base, detectors=dets,
                         ref_power_w=cfg.pumps[0].average_power_w,
                         ref_tau_ps=cfg.pumps[0].pulse_fwhm_ps,
                         ref_raman_ref=cfg.noise.raman_rate_ref)
    powers = tuple(p * 1e-6 for p in cfg.scan_value("powers_uw"))
    bounds = {"tau_eff_ps": (cfg.scan_value("fit_tau_lo_ps"),
                             cfg.scan_value("fit_tau_hi_ps"))}

    # synthetic round trip at 4 percent noise
    rng = np.random.default_rng(20240816)
    series = []
    for kind in ("pair_probability", "car"):
        vals = np.array([model.predict(kind, p, tau_eff_ps=25.0)
                         for p in powers])
        sig = 0.04 * vals
        series.append(MeasurementSeries(
            powers_w=powers, values=tuple(vals + rng.normal(0, sig)),
            sigmas=tuple(sig), kind=kind))
    res = fit(series, {"tau_eff_ps"}, bounds, model)
    rel = abs(res.tau_eff_ps - 25.0) / 25.0
    assert rel <= 0.04, f"synthetic tau {res.tau_eff_ps:.2f} ps"

    # packaged measured-style series through the full scenario path
    run_scenario("fit", cfg, tmp_path)
    text = (tmp_path / "fit_result.txt").read_text()
    fields = dict(line.split(" = ") for line in text.splitlines()
                  if " = " in line and not line.startswith("#"))
    shipped_tau = float(fields["tau_eff_ps"])
    assert 15.0 <= shipped_tau <= 40.0, f"shipped-series tau {shipped_tau}"
    print(f"criterion 10 PASS: synthetic tau {res.tau_eff_ps:.2f} ps "
          f"({rel:.1%} from 25), shipped-series tau {shipped_tau:.2f} "
          f"+- {float(fields['tau_eff_ps_err']):.2f} ps")


def test_criterion_11_source_brightness(default_cfg):
    cfg = default_cfg
    rates = rates_for(cfg, power_w=30e-6)
    dets = (cfg.signal_detector, cfg.idler_detector)
    m = pair_metrics(rates, dets, average_power_w=30e-6)
    b = m["brightness_per_s_per_nm_per_mw"]
    assert 2.5e8 / 3.0 <= b <= 2.5e8 * 3.0, f"brightness {b:.3e}"
    print(f"criterion 11 PASS: brightness at 30 uW = {b:.2e} "
          f"pairs/s/nm/mW (target scale 2.5e8)")


def test_criterion_12_bitwise_reproducibility(default_cfg, tmp_path):
    cfg = replace_run(default_cfg, n_pulses=200_000)
    names = ["histogram.csv", "histogram_metrics.txt", "histogram.png"]
    run_scenario("histogram", cfg, tmp_path / "a")
    run_scenario("histogram", cfg, tmp_path / "b")
    run_scenario("histogram", replace_run(cfg, workers=3), tmp_path / "w")
    for name in names:
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
        assert a == (tmp_path / "w" / name).read_bytes(), name
    run_scenario("phasematch", cfg, tmp_path / "p1")
    run_scenario("phasematch", cfg, tmp_path / "p2")
    for name in ("phasematch_degenerate.csv", "phasematch.png"):
        assert (tmp_path / "p1" / name).read_bytes() \
            == (tmp_path / "p2" / name).read_bytes(), name
    print("criterion 12 PASS: CSV, text, and PNG outputs byte-identical "
          "across reruns and worker counts")
