"""Scenario runners: map a validated config to CSV tables and figures.

Every scenario writes one or more CSV files (header row plus ``#`` metadata
lines carrying the software version, config hash, and seed) and a PNG
figure next to each table. Reruns with the same config and seed are
byte-identical, including multi-worker runs.
"""

from __future__ import annotations

import dataclasses
import math
import pathlib

import numpy as np

from . import __version__, plots
from .calibration import (FitError, ForwardModel, fit, fit_delay_scan,
                          read_series)
from .config import ExperimentConfig, config_hash
from .counting import (analytic_car, assemble_channel_rates, car, histogram,
                       normalize_histogram, pair_metrics,
                       pulse_outcome_probs, simulate_pulses)
from .fwm import (FilterChannel, PhysicsValidityError, PumpConfig,
                  phasematch_spectrum, raman_noise_mean, seeded_idler_power)

# per-point seed stride for scans that run one simulation per grid point
SEED_STRIDE = 1_000_003

CAR_WINDOW_NS = 2.0


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _meta_lines(cfg: ExperimentConfig, scenario: str, extra=()) -> list[str]:
    lines = [
        f"# fwmpairs {__version__} scenario={scenario}",
        f"# config_hash = {config_hash(cfg)}",
        f"# seed = {cfg.seed}",
        f"# pair_statistics = {cfg.pair_statistics}",
    ]
    aeff = cfg.aeff_override_um2
    lines.append(f"# aeff_um2 = "
                 + (f"{aeff!r} (override)" if aeff else "computed from mode"))
    lines.extend(f"# {k} = {_fmt(v)}" for k, v in extra)
    return lines


def write_csv(path, header: list[str], rows, meta: list[str]) -> pathlib.Path:
    path = pathlib.Path(path)
    with open(path, "w", newline="\n") as fh:
        for line in meta:
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_scenario_csv(path) -> tuple[dict, dict]:
    """Read back a scenario CSV: ({column: array}, {meta key: string}).

    Values parse to float arrays where possible, otherwise stay strings.
    """
    meta = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                else:
                    meta.setdefault("banner", body)
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row found")
    columns = {}
    for k, name in enumerate(header):
        raw = [r[k] for r in rows]
        try:
            columns[name] = np.array([float(v) for v in raw])
        except ValueError:
            columns[name] = np.array(raw)
    return columns, meta


def write_keyvalues(path, pairs, meta: list[str]) -> pathlib.Path:
    path = pathlib.Path(path)
    with open(path, "w", newline="\n") as fh:
        for line in meta:
            fh.write(line + "\n")
        for key, value in pairs:
            fh.write(f"{key} = {_fmt(value)}\n")
    return path


def scaled_pumps(cfg: ExperimentConfig, power_w: float | None):
    """Pumps with pump1 set to power_w, pump2 scaled proportionally."""
    if power_w is None:
        return cfg.pumps
    factor = power_w / cfg.pumps[0].average_power_w
    return tuple(dataclasses.replace(p, average_power_w=p.average_power_w
                                     * factor) for p in cfg.pumps)


def rates_for(cfg: ExperimentConfig, power_w: float | None = None,
              delay_ps: float = 0.0, idler_filter: FilterChannel = None):
    return assemble_channel_rates(
        cfg.geometry, list(scaled_pumps(cfg, power_w)), cfg.signal_filter,
        idler_filter if idler_filter is not None else cfg.idler_filter,
        cfg.noise, delay_ps=delay_ps, aeff_um2=cfg.aeff_override_um2,
        phi_prefactor=cfg.phi_prefactor, pair_statistics=cfg.pair_statistics)


def _point_seed(seed: int, index: int) -> int:
    return seed + SEED_STRIDE * (index + 1)


def _count_windows(records, det_i, rep_period_ns):
    """Coincidence and accidental window counts from simulated records."""
    off = records["idler_time_offset"][records["idler_detected"]]
    t0 = det_i.electronic_delay_ns
    c = int(np.count_nonzero(np.abs(off - t0) <= CAR_WINDOW_NS / 2))
    a = int(np.count_nonzero(
        np.abs(off - (t0 - rep_period_ns)) <= CAR_WINDOW_NS / 2))
    return c, a


def _predicted_windows(rates, detectors, n_pulses):
    """Expected window counts for the same model the Monte Carlo samples."""
    det_i = detectors[1]
    probs = pulse_outcome_probs(rates, detectors)
    dark_win = det_i.dark_prob_per_gate * CAR_WINDOW_NS / det_i.gate_width_ns
    live = n_pulses * probs["dead_time_factor"]
    pred_c = live * (probs["p_joint"] + probs["p_signal"] * dark_win)
    pred_a = live * probs["p_signal"] * (probs["p_idler"] + dark_win)
    return pred_c, pred_a


def run_phasematch(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Normalized seeded-FWM phasematching scans, degenerate and not."""
    scan = dict(cfg.scan)
    template = dataclasses.replace(cfg.pumps[0], pulsed=False)

    def one_scan(pump1_nm, pump2_nm, start, stop, points):
        pump1 = dataclasses.replace(
            template, wavelength_nm=pump1_nm,
            average_power_w=scan["phasematch_power_w"])
        pump2 = dataclasses.replace(pump1, wavelength_nm=pump2_nm)
        grid = np.linspace(start, stop, points)
        return phasematch_spectrum(cfg.geometry, pump1, pump2, grid,
                                   seed_power_w=scan["phasematch_power_w"],
                                   aeff_um2=cfg.aeff_override_um2)

    deg = one_scan(scan["phasematch_pump_nm"], scan["phasematch_pump_nm"],
                   scan["phasematch_start_nm"], scan["phasematch_stop_nm"],
                   scan["phasematch_points"])
    nondeg = one_scan(scan["nondeg_pump1_nm"], scan["nondeg_pump2_nm"],
                      scan["nondeg_start_nm"], scan["nondeg_stop_nm"],
                      scan["nondeg_points"])

    out = pathlib.Path(out_dir)
    written = []
    header = ["signal_nm", "idler_nm", "delta_beta_per_m", "efficiency",
              "efficiency_db"]
    for name, spec, pumps in (
            ("phasematch_degenerate", deg,
             (scan["phasematch_pump_nm"], scan["phasematch_pump_nm"])),
            ("phasematch_nondegenerate", nondeg,
             (scan["nondeg_pump1_nm"], scan["nondeg_pump2_nm"]))):
        eff_db = spec.efficiency_db()
        rows = zip(spec.signal_nm, spec.idler_nm, spec.delta_beta_per_m,
                   spec.efficiency, eff_db)
        meta = _meta_lines(cfg, "phasematch", [
            ("pump1_nm", pumps[0]), ("pump2_nm", pumps[1]),
            ("pump_power_w", scan["phasematch_power_w"]),
            ("main_lobe_fwhm_nm", spec.main_lobe_fwhm_nm())])
        written.append(write_csv(out / f"{name}.csv", header, rows, meta))
    fig = plots.phasematch_figure(
        {"signal_nm": deg.signal_nm, "efficiency": deg.efficiency},
        {"signal_nm": nondeg.signal_nm, "efficiency": nondeg.efficiency},
        scan["phasematch_pump_nm"],
        (scan["nondeg_pump1_nm"], scan["nondeg_pump2_nm"]))
    png = out / "phasematch.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_seeded(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Absolute seeded-FWM idler power versus seed wavelength."""
    scan = dict(cfg.scan)
    pump = dataclasses.replace(
        cfg.pumps[0], pulsed=False,
        wavelength_nm=scan["phasematch_pump_nm"],
        average_power_w=scan["phasematch_power_w"])
    grid = np.linspace(scan["phasematch_start_nm"],
                       scan["phasematch_stop_nm"],
                       scan["phasematch_points"])
    rows = []
    dbm = []
    for lam in grid:
        p_w = seeded_idler_power(cfg.geometry, pump, pump,
                                 scan["phasematch_power_w"], float(lam),
                                 aeff_um2=cfg.aeff_override_um2)
        value_dbm = 10.0 * math.log10(p_w * 1e3) if p_w > 0 else -math.inf
        dbm.append(value_dbm)
        rows.append((lam, p_w, value_dbm))
    out = pathlib.Path(out_dir)
    meta = _meta_lines(cfg, "seeded", [
        ("pump_nm", pump.wavelength_nm),
        ("pump_power_w", pump.average_power_w),
        ("seed_power_w", scan["phasematch_power_w"])])
    written = [write_csv(out / "seeded.csv",
                         ["signal_nm", "idler_power_w", "idler_power_dbm"],
                         rows, meta)]
    fig = plots.seeded_figure(grid, dbm, pump.wavelength_nm)
    png = out / "seeded.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_pairs(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Analytic pair-rate figures of merit over the power grid."""
    detectors = (cfg.signal_detector, cfg.idler_detector)
    powers_uw = cfg.scan_value("powers_uw")
    rows = []
    for p_uw in powers_uw:
        p_w = p_uw * 1e-6
        rates = rates_for(cfg, power_w=p_w)
        metrics = pair_metrics(rates, detectors, average_power_w=p_w,
                               signal_bandwidth_nm=
                               cfg.signal_filter.bandwidth_nm)
        rows.append((p_uw, rates.mu_pair,
                     metrics["pairs_per_pulse_detected"],
                     metrics["pairs_per_s_detected"],
                     metrics["pairs_per_s_inside_wire"],
                     metrics["brightness_per_s_per_nm_per_mw"],
                     metrics["dead_time_factor"],
                     analytic_car(rates, detectors)))
    out = pathlib.Path(out_dir)
    header = ["power_uw", "mu_pair", "pairs_per_pulse_detected",
              "pairs_per_s_detected", "pairs_per_s_inside_wire",
              "brightness_per_s_per_nm_per_mw", "dead_time_factor",
              "car_analytic"]
    meta = _meta_lines(cfg, "pairs",
                       [("signal_bandwidth_nm",
                         cfg.signal_filter.bandwidth_nm)])
    written = [write_csv(out / "pairs.csv", header, rows, meta)]
    cols = list(zip(*rows))
    fig = plots.pairs_figure(cols[0], cols[1], cols[3], cols[4])
    png = out / "pairs.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_car_scan(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """CAR versus power: analytic curve plus per-point Monte Carlo."""
    detectors = (cfg.signal_detector, cfg.idler_detector)
    powers_uw = cfg.scan_value("powers_uw")
    rows = []
    for k, p_uw in enumerate(powers_uw):
        rates = rates_for(cfg, power_w=p_uw * 1e-6)
        records = simulate_pulses(rates, detectors, cfg.n_pulses,
                                  _point_seed(cfg.seed, k),
                                  block_size=cfg.block_size,
                                  workers=cfg.workers)
        c, a = _count_windows(records, cfg.idler_detector,
                              rates.rep_period_ns)
        try:
            value, err = car(records, window_ns=CAR_WINDOW_NS,
                             true_offset_ns=
                             cfg.idler_detector.electronic_delay_ns,
                             rep_period_ns=rates.rep_period_ns)
        except ValueError:
            value, err = math.nan, math.nan
        rows.append((p_uw, rates.mu_pair, analytic_car(rates, detectors),
                     value, err, c, a))
    out = pathlib.Path(out_dir)
    header = ["power_uw", "mu_pair", "car_analytic", "car_mc", "car_mc_err",
              "coincidences", "accidentals"]
    meta = _meta_lines(cfg, "car-scan", [
        ("n_pulses_per_point", cfg.n_pulses),
        ("car_window_ns", CAR_WINDOW_NS)])
    written = [write_csv(out / "car_scan.csv", header, rows, meta)]
    cols = list(zip(*rows))
    fig = plots.car_figure(cols[0], cols[2], cols[3], cols[4])
    png = out / "car_scan.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_histogram(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Signal-idler timing histogram plus an energy-non-conserving twin.

    The noise-only trace moves the idler channel off the energy-conserving
    wavelength, killing the pair term while keeping all noise sources.
    """
    scan = dict(cfg.scan)
    detectors = (cfg.signal_detector, cfg.idler_detector)
    t0 = cfg.idler_detector.electronic_delay_ns

    def one(rates, seed):
        records = simulate_pulses(rates, detectors, cfg.n_pulses, seed,
                                  block_size=cfg.block_size,
                                  workers=cfg.workers)
        hist = histogram(records, bin_width_ns=scan["histogram_bin_ns"],
                         span_ns=scan["histogram_span_ns"],
                         rep_period_ns=rates.rep_period_ns)
        try:
            normalize_histogram(hist, true_offset_ns=t0)
        except ValueError:
            # short runs can leave the accidental comb empty; keep the
            # raw counts and mark the normalized column undefined
            hist.normalized = np.full(len(hist.counts), math.nan)
        try:
            value, err = car(records, window_ns=CAR_WINDOW_NS,
                             true_offset_ns=t0,
                             rep_period_ns=rates.rep_period_ns)
        except ValueError:
            value, err = math.nan, math.nan
        c, a = _count_windows(records, cfg.idler_detector,
                              rates.rep_period_ns)
        return hist, value, err, c, a

    rates_main = rates_for(cfg)
    noise_filter = dataclasses.replace(cfg.idler_filter,
                                       center_nm=scan["noise_only_idler_nm"])
    rates_noise = rates_for(cfg, idler_filter=noise_filter)
    main, car_main, err_main, c_main, a_main = one(rates_main, cfg.seed)
    noise, car_noise, err_noise, c_noise, a_noise = one(
        rates_noise, _point_seed(cfg.seed, 0))

    out = pathlib.Path(out_dir)
    centers = main.bin_centers()
    rows = zip(centers, main.counts, noise.counts, main.normalized,
               noise.normalized)
    meta = _meta_lines(cfg, "histogram", [
        ("n_pulses", cfg.n_pulses),
        ("noise_only_idler_nm", scan["noise_only_idler_nm"]),
        ("mu_pair", rates_main.mu_pair),
        ("mu_pair_noise_only", rates_noise.mu_pair)])
    written = [write_csv(out / "histogram.csv",
                         ["offset_ns", "counts", "counts_noise_only",
                          "normalized", "normalized_noise_only"],
                         rows, meta)]
    written.append(write_keyvalues(out / "histogram_metrics.txt", [
        ("car", car_main), ("car_err", err_main),
        ("coincidences", c_main), ("accidentals", a_main),
        ("car_noise_only", car_noise), ("car_noise_only_err", err_noise),
        ("coincidences_noise_only", c_noise),
        ("accidentals_noise_only", a_noise),
        ("n_pulses", cfg.n_pulses)], meta))
    fig = plots.histogram_figure(centers, main.normalized, noise.normalized)
    png = out / "histogram.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_delay_scan(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Coincidences and accidentals versus pump-pump arrival delay."""
    if len(cfg.pumps) != 2:
        raise PhysicsValidityError(
            "delay scan needs two pumps; add a [pump2] section")
    scan = dict(cfg.scan)
    detectors = (cfg.signal_detector, cfg.idler_detector)
    delays = np.linspace(scan["delay_start_ps"], scan["delay_stop_ps"],
                         scan["delay_points"])
    rows = []
    for k, d in enumerate(delays):
        rates = rates_for(cfg, delay_ps=float(d))
        records = simulate_pulses(rates, detectors, cfg.n_pulses,
                                  _point_seed(cfg.seed, k),
                                  block_size=cfg.block_size,
                                  workers=cfg.workers)
        c, a = _count_windows(records, cfg.idler_detector,
                              rates.rep_period_ns)
        pred_c, pred_a = _predicted_windows(rates, detectors, cfg.n_pulses)
        rows.append((float(d), rates.mu_pair, c, a, pred_c, pred_a))

    cols = list(zip(*rows))
    tau1 = cfg.pumps[0].pulse_fwhm_ps
    tau2 = cfg.pumps[1].pulse_fwhm_ps
    predicted_fwhm = math.hypot(tau1, tau2)
    fit_pairs = [("predicted_fwhm_ps", predicted_fwhm)]
    fit_curve = None
    try:
        result = fit_delay_scan(np.asarray(cols[0]), np.asarray(cols[2]))
        fit_pairs += sorted(result.items())
        dense = np.linspace(delays[0], delays[-1], 300)
        sigma = result["sigma_ps"]
        fit_curve = (dense, result["background"] + result["amplitude"]
                     * np.exp(-0.5 * ((dense - result["center_ps"])
                                      / sigma) ** 2))
    except FitError as exc:
        fit_pairs.append(("fit_error", str(exc)))

    out = pathlib.Path(out_dir)
    meta = _meta_lines(cfg, "delay-scan", [
        ("n_pulses_per_point", cfg.n_pulses),
        ("pump1_fwhm_ps", tau1), ("pump2_fwhm_ps", tau2)])
    written = [write_csv(out / "delay_scan.csv",
                         ["delay_ps", "mu_pair", "coincidences",
                          "accidentals", "pred_coincidences",
                          "pred_accidentals"],
                         rows, meta)]
    written.append(write_keyvalues(out / "delay_scan_fit.txt",
                                   fit_pairs, meta))
    fig = plots.delay_figure(cols[0], cols[2], cols[3], fit_curve)
    png = out / "delay_scan.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def run_noise(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Raman spectrum across detuning plus per-channel noise budget."""
    pump1 = cfg.pumps[0]
    lo = cfg.noise.raman_detuning_nm[0]
    hi = cfg.noise.raman_detuning_nm[-1]
    detunings = np.linspace(lo + 0.5, hi - 0.5, 239)
    bw = cfg.idler_filter.bandwidth_nm
    spec_rows = []
    for det in detunings:
        probe = FilterChannel(center_nm=pump1.wavelength_nm + det,
                              bandwidth_nm=bw)
        per_pulse = sum(raman_noise_mean(cfg.noise, p, probe)
                        for p in cfg.pumps)
        spec_rows.append((pump1.wavelength_nm + det, float(det),
                          cfg.noise.multiplier(float(det)), per_pulse))

    powers_uw = cfg.scan_value("powers_uw")
    det_s, det_i = cfg.signal_detector, cfg.idler_detector
    budget_rows = []
    for p_uw in powers_uw:
        rates = rates_for(cfg, power_w=p_uw * 1e-6)
        budget_rows.append((
            p_uw,
            rates.mu_pair * rates.eta_s * det_s.efficiency,
            rates.raman_s * rates.eta_s * det_s.efficiency,
            rates.raman_i * rates.eta_i * det_i.efficiency,
            rates.leakage_s * det_s.efficiency,
            rates.leakage_i * det_i.efficiency,
            det_s.dark_rate_cps / rates.rep_rate_hz,
            det_i.dark_prob_per_gate))

    out = pathlib.Path(out_dir)
    meta = _meta_lines(cfg, "noise", [
        ("pump_power_w", pump1.average_power_w),
        ("probe_bandwidth_nm", bw)])
    written = [
        write_csv(out / "noise_spectrum.csv",
                  ["center_nm", "detuning_nm", "multiplier",
                   "raman_photons_per_pulse"], spec_rows, meta),
        write_csv(out / "noise_budget.csv",
                  ["power_uw", "pair_signal_detected", "raman_s_detected",
                   "raman_i_detected", "leakage_s_detected",
                   "leakage_i_detected", "dark_s_per_pulse",
                   "dark_i_per_gate"], budget_rows, meta),
    ]
    cols = list(zip(*budget_rows))
    budget = {"pair_signal_detected": cols[1], "raman_s_detected": cols[2],
              "raman_i_detected": cols[3], "leakage_s_detected": cols[4],
              "leakage_i_detected": cols[5]}
    fig = plots.noise_figure([r[1] for r in spec_rows],
                             [r[3] for r in spec_rows], cols[0], budget)
    png = out / "noise.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


def _packaged_series(name: str) -> str:
    from importlib import resources
    return str(resources.files("fwmpairs.data") / name)


def run_fit(cfg: ExperimentConfig, out_dir) -> list[pathlib.Path]:
    """Fit the detection model to measured power series.

    Defaults to the packaged measured series (pair probability per pulse
    and CAR versus coupled power); the effective in-wire pulse length is
    the headline fitted parameter.
    """
    scan = dict(cfg.scan)
    pair_path = scan["fit_pair_series"] \
        or _packaged_series("pair_probability_vs_power.csv")
    car_path = scan["fit_car_series"] or _packaged_series("car_vs_power.csv")
    series = [read_series(pair_path, "pair_probability"),
              read_series(car_path, "car")]

    base_power = cfg.pumps[0].average_power_w
    model = ForwardModel(
        base=rates_for(cfg),
        detectors=(cfg.signal_detector, cfg.idler_detector),
        ref_power_w=base_power,
        ref_tau_ps=cfg.pumps[0].pulse_fwhm_ps,
        ref_raman_ref=cfg.noise.raman_rate_ref)
    free = set(scan["fit_free_params"])
    bounds = {"tau_eff_ps": (scan["fit_tau_lo_ps"], scan["fit_tau_hi_ps"]),
              "dead_time_ns": (scan["fit_dead_lo_ns"],
                               scan["fit_dead_hi_ns"]),
              "raman_ref": (scan["fit_raman_lo"], scan["fit_raman_hi"])}
    result = fit(series, free, bounds, model)

    pairs = []
    for name in result.param_order:
        pairs.append((name, result.params[name]))
        pairs.append((name + "_err", result.uncertainties[name]))
    pairs += [("residual", result.residual)]
    pairs += [(f"residual_{s.kind}", r)
              for s, r in zip(series, result.per_series_residuals)]

    out = pathlib.Path(out_dir)
    meta = _meta_lines(cfg, "fit", [
        ("free_params", ",".join(result.param_order)),
        ("pair_series", pathlib.Path(pair_path).name),
        ("car_series", pathlib.Path(car_path).name)])
    header = [k for k, _ in pairs]
    written = [write_csv(out / "fit_result.csv", header,
                         [tuple(v for _, v in pairs)], meta),
               write_keyvalues(out / "fit_result.txt", pairs, meta)]

    curves = []
    for s in series:
        px = np.geomspace(s.powers_w[0], s.powers_w[-1], 120)
        py = [model.predict(s.kind, float(p), **result.params) for p in px]
        curves.append((px, py))
    fig = plots.fit_figure(series, curves)
    png = out / "fit_result.png"
    plots.save_figure(fig, png)
    written.append(png)
    return written


SCENARIOS = {
    "phasematch": run_phasematch,
    "seeded": run_seeded,
    "pairs": run_pairs,
    "car-scan": run_car_scan,
    "histogram": run_histogram,
    "delay-scan": run_delay_scan,
    "noise": run_noise,
    "fit": run_fit,
}


def run_scenario(name: str, cfg: ExperimentConfig,
                 out_dir) -> list[pathlib.Path]:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from "
                         + ", ".join(sorted(SCENARIOS)))
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return SCENARIOS[name](cfg, out)
