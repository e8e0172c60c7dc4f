"""INI experiment configuration: strict schema, validation, serialization.

A config describes one apparatus (microwire, pumps, filters, detectors,
noise model) plus run controls and scan grids. Parsing is strict: unknown
sections or keys are rejected, every apparatus key must be present, and all
problems are reported together in one itemized error. Serialization is
canonical (fixed section/key order, shortest round-trip float repr), so the
config hash embedded in output files is stable and
``load_config_text(serialize_config(cfg))`` reproduces ``cfg`` exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass

from .counting import DetectorModel
from .fwm import FilterChannel, NoiseModel, PumpConfig, load_raman_table
from .materials import refractive_index
from .modes import WaveguideGeometry


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_optional_float(text: str):
    return None if not text.strip() else float(text)


def _parse_float_list(text: str) -> tuple:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(s) for s in items)


def _parse_str_list(text: str) -> tuple:
    return tuple(s for s in (p.strip() for p in text.split(",")) if s)


# schema: section -> key -> (parser, default). A default of _REQUIRED means
# the key must appear explicitly; scan keys always carry usable defaults.
_REQUIRED = object()

SCHEMA = {
    "geometry": {
        "length_m": (_parse_float, _REQUIRED),
        "core_diameter_nm": (_parse_float, _REQUIRED),
        "propagation_loss_db_per_m": (_parse_float, _REQUIRED),
        "input_coupling_loss_db": (_parse_float, _REQUIRED),
        "output_coupling_loss_db": (_parse_float, _REQUIRED),
    },
    "pump1": {
        "wavelength_nm": (_parse_float, _REQUIRED),
        "average_power_w": (_parse_float, _REQUIRED),
        "pulse_fwhm_ps": (_parse_float, _REQUIRED),
        "rep_rate_hz": (_parse_float, _REQUIRED),
        "pulsed": (_parse_bool, _REQUIRED),
        "polarization": (_parse_str, _REQUIRED),
    },
    "pump2": {  # optional section: absent means a degenerate single pump
        "wavelength_nm": (_parse_float, _REQUIRED),
        "average_power_w": (_parse_float, _REQUIRED),
        "pulse_fwhm_ps": (_parse_float, _REQUIRED),
        "rep_rate_hz": (_parse_float, _REQUIRED),
        "pulsed": (_parse_bool, _REQUIRED),
        "polarization": (_parse_str, _REQUIRED),
    },
    "signal_filter": {
        "center_nm": (_parse_float, _REQUIRED),
        "bandwidth_nm": (_parse_float, _REQUIRED),
        "insertion_loss_db": (_parse_float, _REQUIRED),
        "pump_isolation_db": (_parse_float, _REQUIRED),
    },
    "idler_filter": {
        "center_nm": (_parse_float, _REQUIRED),
        "bandwidth_nm": (_parse_float, _REQUIRED),
        "insertion_loss_db": (_parse_float, _REQUIRED),
        "pump_isolation_db": (_parse_float, _REQUIRED),
    },
    "signal_detector": {  # free-running NFAD
        "efficiency": (_parse_float, _REQUIRED),
        "dark_rate_cps": (_parse_float, _REQUIRED),
        "dead_time_ns": (_parse_float, _REQUIRED),
    },
    "idler_detector": {  # gated InGaAs APD
        "efficiency": (_parse_float, _REQUIRED),
        "dark_prob_per_gate": (_parse_float, _REQUIRED),
        "gate_width_ns": (_parse_float, _REQUIRED),
        "electronic_delay_ns": (_parse_float, _REQUIRED),
    },
    "noise": {
        "raman_rate_ref": (_parse_float, _REQUIRED),
        "reference_power_w": (_parse_float, _REQUIRED),
        "include_raman": (_parse_bool, _REQUIRED),
        "include_leakage": (_parse_bool, _REQUIRED),
        "raman_table": (_parse_str, ""),  # blank = packaged table
    },
    "source": {
        "pair_statistics": (_parse_str, _REQUIRED),
        "aeff_override_um2": (_parse_optional_float, _REQUIRED),
        "phi_prefactor": (_parse_float, _REQUIRED),
    },
    "run": {
        "n_pulses": (_parse_int, _REQUIRED),
        "seed": (_parse_int, _REQUIRED),
        "block_size": (_parse_int, _REQUIRED),
        "workers": (_parse_int, _REQUIRED),
    },
    "scan": {
        "powers_uw": (_parse_float_list,
                      (0.3, 0.49, 0.8, 1.3, 2.0, 3.2, 5.0, 8.0,
                       12.7, 20.0, 32.0)),
        "phasematch_pump_nm": (_parse_float, 1548.5),
        "phasematch_power_w": (_parse_float, 190e-6),
        "phasematch_start_nm": (_parse_float, 1505.0),
        "phasematch_stop_nm": (_parse_float, 1547.6),
        "phasematch_points": (_parse_int, 160),
        "nondeg_pump1_nm": (_parse_float, 1549.0),
        "nondeg_pump2_nm": (_parse_float, 1562.1),
        "nondeg_start_nm": (_parse_float, 1522.0),
        "nondeg_stop_nm": (_parse_float, 1589.0),
        "nondeg_points": (_parse_int, 220),
        "histogram_bin_ns": (_parse_float, 1.0),
        "histogram_span_ns": (_parse_float, 50.0),
        "noise_only_idler_nm": (_parse_float, 1558.17),
        "delay_start_ps": (_parse_float, -80.0),
        "delay_stop_ps": (_parse_float, 80.0),
        "delay_points": (_parse_int, 33),
        "fit_free_params": (_parse_str_list, ("tau_eff_ps",)),
        "fit_tau_lo_ps": (_parse_float, 5.0),
        "fit_tau_hi_ps": (_parse_float, 80.0),
        "fit_dead_lo_ns": (_parse_float, 1000.0),
        "fit_dead_hi_ns": (_parse_float, 50000.0),
        "fit_raman_lo": (_parse_float, 0.004),
        "fit_raman_hi": (_parse_float, 0.09),
        "fit_pair_series": (_parse_str, ""),  # blank = packaged data
        "fit_car_series": (_parse_str, ""),
    },
}

_OPTIONAL_SECTIONS = frozenset({"pump2", "scan"})


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description built from an INI file."""

    geometry: WaveguideGeometry
    pumps: tuple
    signal_filter: FilterChannel
    idler_filter: FilterChannel
    signal_detector: DetectorModel
    idler_detector: DetectorModel
    noise: NoiseModel
    pair_statistics: str
    aeff_override_um2: float | None
    phi_prefactor: float
    n_pulses: int
    seed: int
    block_size: int
    workers: int
    scan: tuple  # sorted (key, value) pairs so the dataclass stays hashable
    raman_table_name: str = ""

    def scan_value(self, key: str):
        for k, v in self.scan:
            if k == key:
                return v
        raise KeyError(key)


def _read_ini(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"INI syntax: {exc}"]) from exc
    return parser


def _collect_values(parser: configparser.ConfigParser):
    """Schema-check the raw INI and return {section: {key: parsed}}."""
    errors = []
    if parser.defaults():
        errors.append("keys are not allowed outside a section: "
                      + ", ".join(sorted(parser.defaults())))
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
    values = {}
    for section, keys in SCHEMA.items():
        present = parser.has_section(section)
        if not present and section in _OPTIONAL_SECTIONS:
            if section == "scan":
                values[section] = {k: d for k, (_, d) in keys.items()}
            continue
        if not present:
            errors.append(f"missing section [{section}]")
            continue
        out = {}
        for key in parser.options(section):
            if key not in keys:
                errors.append(f"unknown key '{key}' in [{section}]")
        for key, (parse, default) in keys.items():
            if not parser.has_option(section, key):
                if default is _REQUIRED:
                    errors.append(f"missing key '{key}' in [{section}]")
                else:
                    out[key] = default
                continue
            raw = parser.get(section, key)
            try:
                out[key] = parse(raw)
            except ValueError as exc:
                errors.append(f"[{section}] {key}: {exc}")
        values[section] = out
    if errors:
        raise ConfigError(errors)
    return values


def _build(values, base_dir) -> ExperimentConfig:
    """Construct domain objects; their validators report with context."""
    errors = []

    def make(label, ctor, **kwargs):
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            errors.append(f"[{label}] {exc}")
            return None

    geometry = make("geometry", WaveguideGeometry, **values["geometry"])
    pumps = [make("pump1", PumpConfig, **values["pump1"])]
    if "pump2" in values:
        pumps.append(make("pump2", PumpConfig, **values["pump2"]))
    signal_filter = make("signal_filter", FilterChannel,
                         **values["signal_filter"])
    idler_filter = make("idler_filter", FilterChannel,
                        **values["idler_filter"])
    det_s = make("signal_detector", DetectorModel, kind="free_running",
                 **values["signal_detector"])
    det_i = make("idler_detector", DetectorModel, kind="gated",
                 **values["idler_detector"])

    noise_raw = values["noise"]
    table_name = noise_raw["raman_table"]
    noise = None
    try:
        table_path = None
        if table_name:
            table_path = table_name if base_dir is None \
                else str(base_dir / table_name)
        detuning, multiplier = load_raman_table(table_path)
        noise = NoiseModel(
            raman_detuning_nm=detuning, raman_multiplier=multiplier,
            raman_rate_ref=noise_raw["raman_rate_ref"],
            reference_power_w=noise_raw["reference_power_w"],
            enabled=noise_raw["include_raman"],
            include_leakage=noise_raw["include_leakage"])
    except (OSError, ValueError) as exc:
        errors.append(f"[noise] {exc}")

    src = values["source"]
    if src["pair_statistics"] not in ("thermal", "poisson"):
        errors.append("[source] pair_statistics must be 'thermal' or "
                      f"'poisson', got {src['pair_statistics']!r}")
    aeff = src["aeff_override_um2"]
    if aeff is not None and aeff <= 0:
        errors.append("[source] aeff_override_um2 must be positive or blank")
    if src["phi_prefactor"] <= 0:
        errors.append("[source] phi_prefactor must be positive")

    run = values["run"]
    if run["n_pulses"] <= 0:
        errors.append("[run] n_pulses must be positive")
    if run["seed"] < 0:
        errors.append("[run] seed must be non-negative")
    if run["block_size"] <= 0:
        errors.append("[run] block_size must be positive")
    if run["workers"] <= 0:
        errors.append("[run] workers must be positive")

    scan = values["scan"]
    if scan["phasematch_start_nm"] >= scan["phasematch_stop_nm"]:
        errors.append("[scan] phasematch_start_nm must be below "
                      "phasematch_stop_nm")
    if scan["nondeg_start_nm"] >= scan["nondeg_stop_nm"]:
        errors.append("[scan] nondeg_start_nm must be below nondeg_stop_nm")
    if scan["delay_start_ps"] >= scan["delay_stop_ps"]:
        errors.append("[scan] delay_start_ps must be below delay_stop_ps")
    for key in ("phasematch_points", "nondeg_points", "delay_points"):
        if scan[key] < 2:
            errors.append(f"[scan] {key} must be at least 2")
    if any(p <= 0 for p in scan["powers_uw"]):
        errors.append("[scan] powers_uw must all be positive")
    if scan["histogram_bin_ns"] <= 0 or scan["histogram_span_ns"] <= 0:
        errors.append("[scan] histogram bin and span must be positive")
    bad = [p for p in scan["fit_free_params"]
           if p not in ("tau_eff_ps", "dead_time_ns", "raman_ref")]
    if bad:
        errors.append("[scan] fit_free_params: unknown parameter(s) "
                      + ", ".join(repr(b) for b in bad))
    for lo_key, hi_key in (("fit_tau_lo_ps", "fit_tau_hi_ps"),
                           ("fit_dead_lo_ns", "fit_dead_hi_ns"),
                           ("fit_raman_lo", "fit_raman_hi")):
        if scan[lo_key] >= scan[hi_key]:
            errors.append(f"[scan] {lo_key} must be below {hi_key}")

    if errors:
        raise ConfigError(errors)

    # cross checks need the constructed objects
    for pump in pumps:
        for mat_label, material in (("core", geometry.core),
                                    ("cladding", geometry.cladding)):
            try:
                refractive_index(material, pump.wavelength_nm)
            except ValueError:
                errors.append(
                    f"[pump] wavelength {pump.wavelength_nm:g} nm outside "
                    f"the {mat_label} material validity window")
    if noise.enabled:
        lo, hi = noise.raman_detuning_nm[0], noise.raman_detuning_nm[-1]
        for label, channel in (("signal_filter", signal_filter),
                               ("idler_filter", idler_filter)):
            for pump in pumps:
                detuning = channel.center_nm - pump.wavelength_nm
                if not lo <= detuning <= hi:
                    errors.append(
                        f"[{label}] detuning {detuning:+.2f} nm from the "
                        f"{pump.wavelength_nm:g} nm pump lies outside the "
                        f"tabulated Raman range [{lo:g}, {hi:g}] nm")
    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        geometry=geometry, pumps=tuple(pumps),
        signal_filter=signal_filter, idler_filter=idler_filter,
        signal_detector=det_s, idler_detector=det_i, noise=noise,
        pair_statistics=src["pair_statistics"], aeff_override_um2=aeff,
        phi_prefactor=src["phi_prefactor"], n_pulses=run["n_pulses"],
        seed=run["seed"], block_size=run["block_size"],
        workers=run["workers"], scan=tuple(sorted(scan.items())),
        raman_table_name=table_name)


def load_config_text(text: str, base_dir=None) -> ExperimentConfig:
    return _build(_collect_values(_read_ini(text)), base_dir)


def load_config(path) -> ExperimentConfig:
    """Parse and fully validate an INI config file.

    Raises ConfigError listing every problem (unknown keys, missing keys,
    unparseable or out-of-range values, filters outside the Raman table).
    """
    import pathlib
    p = pathlib.Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config file: {exc}"]) from exc
    return load_config_text(text, base_dir=p.parent)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config back to canonical INI text (stable key order)."""
    det_s = cfg.signal_detector
    det_i = cfg.idler_detector
    sections = {
        "geometry": {k: getattr(cfg.geometry, k)
                     for k in SCHEMA["geometry"]},
        "pump1": {k: getattr(cfg.pumps[0], k) for k in SCHEMA["pump1"]},
        "signal_filter": {k: getattr(cfg.signal_filter, k)
                          for k in SCHEMA["signal_filter"]},
        "idler_filter": {k: getattr(cfg.idler_filter, k)
                         for k in SCHEMA["idler_filter"]},
        "signal_detector": {k: getattr(det_s, k)
                            for k in SCHEMA["signal_detector"]},
        "idler_detector": {k: getattr(det_i, k)
                           for k in SCHEMA["idler_detector"]},
        "noise": {
            "raman_rate_ref": cfg.noise.raman_rate_ref,
            "reference_power_w": cfg.noise.reference_power_w,
            "include_raman": cfg.noise.enabled,
            "include_leakage": cfg.noise.include_leakage,
            "raman_table": cfg.raman_table_name,
        },
        "source": {
            "pair_statistics": cfg.pair_statistics,
            "aeff_override_um2": cfg.aeff_override_um2,
            "phi_prefactor": cfg.phi_prefactor,
        },
        "run": {
            "n_pulses": cfg.n_pulses,
            "seed": cfg.seed,
            "block_size": cfg.block_size,
            "workers": cfg.workers,
        },
        "scan": dict(cfg.scan),
    }
    if len(cfg.pumps) == 2:
        sections["pump2"] = {k: getattr(cfg.pumps[1], k)
                             for k in SCHEMA["pump2"]}
    out = io.StringIO()
    for section in SCHEMA:
        if section not in sections:
            continue
        out.write(f"[{section}]\n")
        for key in SCHEMA[section]:
            out.write(f"{key} = {_format_value(sections[section][key])}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable digest of the canonical serialization.

    Worker count is normalized out: parallelism never changes results
    (the RNG substream is keyed by block index, not worker), so two runs
    differing only in workers produce identical outputs and must carry
    the same hash.
    """
    canonical = dataclasses.replace(cfg, workers=1)
    return hashlib.sha256(
        serialize_config(canonical).encode("utf-8")).hexdigest()[:12]


def replace_run(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Copy with run-control overrides (n_pulses, seed, workers, ...)."""
    out = dataclasses.replace(cfg, **overrides)
    errors = []
    if out.n_pulses <= 0:
        errors.append("[run] n_pulses must be positive")
    if out.seed < 0:
        errors.append("[run] seed must be >= 0")
    if out.block_size <= 0:
        errors.append("[run] block_size must be positive")
    if out.workers < 1:
        errors.append("[run] workers must be >= 1")
    if errors:
        raise ConfigError(errors)
    return out
