"""Detection-chain Monte Carlo: photon statistics, gating, timing, CAR.

One pulse slot per laser period. Per pulse the model draws a pair number
(thermal by default, Poisson switchable), thins each photon through its
collection path and detector efficiency (two-stage thinning composes to a
single binomial), adds Poisson channel noise and detector darks, applies
the signal detector's non-paralyzable dead time, and opens one idler gate
per surviving signal click. Within a gate the idler detector reports the
earliest click among the pulse slots that fall inside the gate plus a
uniformly timed dark, mirroring a single-avalanche gated detector.

Block structure: pulses are processed in fixed blocks, each drawing from
an independent Philox substream keyed by (seed, block index), so results
are bitwise reproducible for a given (seed, n_pulses, block_size)
regardless of worker count or completion order. Three small block-local
biases are accepted and bounded: the dead-time register resets at block
boundaries (bias < dead_time / block_duration, kept below 0.1% by the
block-size check), gates near a block edge sample lookahead pulses that
the next block re-draws independently, and a photon slot seen by two
overlapping gates is not consumed (both require coincident signal clicks
within four slots, probability ~p_s^2).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RECORD_DTYPE",
    "DetectorModel",
    "ChannelRates",
    "TimingHistogram",
    "nfad_detector",
    "gated_detector",
    "assemble_channel_rates",
    "simulate_pulses",
    "histogram",
    "normalize_histogram",
    "car",
    "analytic_car",
    "pair_metrics",
]

# one CountRecord per signal-detector click (idler fields describe the gate
# that click opened; offset is NaN when the gate saw nothing)
RECORD_DTYPE = np.dtype([
    ("pulse_index", np.int64),
    ("signal_detected", np.bool_),
    ("idler_detected", np.bool_),
    ("idler_time_offset", np.float64),
])

DEFAULT_BLOCK = 1_000_000
# block-local dead-time bias bound enforced at this level
MAX_BLOCK_BIAS = 1e-3


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector, either free-running or gated.

    free_running uses dark_rate_cps and dead_time_ns; gated uses
    dark_prob_per_gate, gate_width_ns, and electronic_delay_ns (the time
    offset at which a photon from the triggering pulse appears in its own
    gate).
    """

    kind: str
    efficiency: float
    dark_rate_cps: float = 0.0
    dark_prob_per_gate: float = 0.0
    dead_time_ns: float = 0.0
    gate_width_ns: float = 0.0
    electronic_delay_ns: float = 0.0

    def __post_init__(self):
        if self.kind not in ("free_running", "gated"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if min(self.dark_rate_cps, self.dark_prob_per_gate,
               self.dead_time_ns) < 0:
            raise ValueError("dark rates and dead time must be >= 0")
        if self.kind == "gated" and self.gate_width_ns <= 0:
            raise ValueError("gated detector needs a positive gate width")
        if not 0.0 <= self.dark_prob_per_gate < 1.0:
            raise ValueError("dark_prob_per_gate must lie in [0, 1)")


def nfad_detector(efficiency: float = 0.10, dark_rate_cps: float = 100.0,
                  dead_time_ns: float = 10_000.0) -> DetectorModel:
    """Free-running signal detector defaults."""
    return DetectorModel(kind="free_running", efficiency=efficiency,
                         dark_rate_cps=dark_rate_cps,
                         dead_time_ns=dead_time_ns)


def gated_detector(efficiency: float = 0.20,
                   dark_prob_per_gate: float = 6e-3,
                   gate_width_ns: float = 50.0,
                   electronic_delay_ns: float = 22.0) -> DetectorModel:
    """Gated idler detector defaults."""
    return DetectorModel(kind="gated", efficiency=efficiency,
                         dark_prob_per_gate=dark_prob_per_gate,
                         gate_width_ns=gate_width_ns,
                         electronic_delay_ns=electronic_delay_ns)


@dataclass(frozen=True)
class ChannelRates:
    """Per-pulse source terms and path transmissions for both channels.

    mu_pair and raman_* are referenced to the inside of the microwire and
    see the full collection path eta_*; leakage_* are referenced to the
    detector input because pump isolation is an end-to-end figure, so they
    are thinned by detector efficiency only. eta_* exclude detector
    efficiency. rep_rate_hz converts per-pulse quantities to rates.
    """

    mu_pair: float
    raman_s: float = 0.0
    raman_i: float = 0.0
    leakage_s: float = 0.0
    leakage_i: float = 0.0
    eta_s: float = 1.0
    eta_i: float = 1.0
    rep_rate_hz: float = 76e6
    pair_statistics: str = "thermal"

    def __post_init__(self):
        vals = (self.mu_pair, self.raman_s, self.raman_i, self.leakage_s,
                self.leakage_i, self.eta_s, self.eta_i)
        if min(vals) < 0:
            raise ValueError("rates and transmissions must be >= 0")
        if max(self.eta_s, self.eta_i) > 1.0:
            raise ValueError("path transmissions cannot exceed 1")
        if self.rep_rate_hz <= 0:
            raise ValueError("rep_rate_hz must be positive")
        if self.pair_statistics not in ("thermal", "poisson"):
            raise ValueError("pair_statistics must be 'thermal' or "
                             "'poisson'")

    @property
    def rep_period_ns(self) -> float:
        return 1e9 / self.rep_rate_hz


@dataclass
class TimingHistogram:
    """Binned signal-idler time offsets from gated records."""

    bin_edges: np.ndarray        # ns, len = n_bins + 1
    counts: np.ndarray           # integer clicks per bin
    rep_period_ns: float
    normalized: np.ndarray | None = None   # accidental peak scaled to 1

    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def assemble_channel_rates(geometry, pumps, signal_filter, idler_filter,
                           noise, delay_ps: float = 0.0,
                           aeff_um2: float | None = None,
                           phi_prefactor: float = 1.0,
                           pair_statistics: str = "thermal",
                           exact_escape: bool = False) -> ChannelRates:
    """Build per-pulse channel rates from the physics layer.

    pumps is a list of one (degenerate) or two physical pump fields;
    noise contributions sum over the physical pumps so a degenerate pump
    is never double counted. Path transmissions combine the half-wire
    escape, output coupling, and each filter's insertion loss.
    """
    from .fwm import (microwire_escape_fraction, pair_mean_per_pulse,
                      polarization_factor, pump_leakage_mean,
                      pump_overlap_factor, raman_noise_mean)

    if not 1 <= len(pumps) <= 2:
        raise ValueError("expected one or two pumps")
    p1 = pumps[0]
    p2 = pumps[-1]
    pol = polarization_factor(p1.polarization, p2.polarization)
    overlap = pump_overlap_factor(p1, p2, delay_ps) \
        if (p1.pulsed and p2.pulsed) else 1.0
    mu = pair_mean_per_pulse(geometry, p1, p2, signal_filter,
                             idler_filter=idler_filter, aeff_um2=aeff_um2,
                             phi_prefactor=phi_prefactor, pol_factor=pol,
                             overlap_factor=overlap)
    raman_s = sum(raman_noise_mean(noise, p, signal_filter) for p in pumps)
    raman_i = sum(raman_noise_mean(noise, p, idler_filter) for p in pumps)
    if noise.include_leakage:
        leak_s = sum(pump_leakage_mean(p, signal_filter) for p in pumps)
        leak_i = sum(pump_leakage_mean(p, idler_filter) for p in pumps)
    else:
        leak_s = leak_i = 0.0
    escape = microwire_escape_fraction(geometry, exact=exact_escape)
    eta_s = escape * 10.0 ** (-(geometry.output_coupling_loss_db
                                + signal_filter.insertion_loss_db) / 10.0)
    eta_i = escape * 10.0 ** (-(geometry.output_coupling_loss_db
                                + idler_filter.insertion_loss_db) / 10.0)
    return ChannelRates(mu_pair=mu, raman_s=raman_s, raman_i=raman_i,
                        leakage_s=leak_s, leakage_i=leak_i,
                        eta_s=eta_s, eta_i=eta_i,
                        rep_rate_hz=p1.rep_rate_hz,
                        pair_statistics=pair_statistics)


def _pair_numbers(rng, mu, size, statistics):
    if mu == 0.0:
        return np.zeros(size, dtype=np.int64)
    if statistics == "poisson":
        return rng.poisson(mu, size)
    # thermal / Bose-Einstein: geometric on {1,2,...} shifted down
    return rng.geometric(1.0 / (1.0 + mu), size) - 1


def _click_probs(rates: ChannelRates, det_s: DetectorModel,
                 det_i: DetectorModel):
    q_s = rates.eta_s * det_s.efficiency
    q_i = rates.eta_i * det_i.efficiency
    a_s = (rates.raman_s * rates.eta_s + rates.leakage_s) * det_s.efficiency
    a_i = (rates.raman_i * rates.eta_i + rates.leakage_i) * det_i.efficiency
    dark_s = det_s.dark_rate_cps * (rates.rep_period_ns * 1e-9)
    return q_s, q_i, a_s, a_i, dark_s


def _gate_offsets(det_i: DetectorModel, rep_period_ns: float):
    """Pulse-slot offsets (m, time) that land inside the idler gate."""
    delay = det_i.electronic_delay_ns
    width = det_i.gate_width_ns
    m_lo = math.ceil(-delay / rep_period_ns)
    m_hi = math.floor((width - 1e-9 - delay) / rep_period_ns)
    ms = np.arange(m_lo, m_hi + 1)
    return ms, delay + ms * rep_period_ns


def _simulate_block(rates: ChannelRates, det_s: DetectorModel,
                    det_i: DetectorModel, n: int, seed: int,
                    block_index: int, base: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed, block_index], dtype=np.uint64)))
    q_s, q_i, a_s, a_i, dark_s = _click_probs(rates, det_s, det_i)
    ms, offsets = _gate_offsets(det_i, rates.rep_period_ns)
    pad_lo = max(0, -int(ms[0]))
    pad_hi = max(0, int(ms[-1]))
    n_ext = n + pad_lo + pad_hi

    # fixed draw order; padded index j+pad_lo covers pulses j in
    # [-pad_lo, n+pad_hi) so gates at the block edges can look across
    npair = _pair_numbers(rng, rates.mu_pair, n_ext, rates.pair_statistics)
    p_pair_s = -np.expm1(np.log1p(-q_s) * npair) if q_s < 1.0 \
        else (npair > 0).astype(float)
    p_pair_i = -np.expm1(np.log1p(-q_i) * npair) if q_i < 1.0 \
        else (npair > 0).astype(float)
    click_pair_s = rng.random(n_ext) < p_pair_s
    click_pair_i = rng.random(n_ext) < p_pair_i
    p_extra_s = 1.0 - np.exp(-a_s) * (1.0 - dark_s)
    click_extra_s = rng.random(n_ext) < p_extra_s
    click_extra_i = rng.random(n_ext) < -np.expm1(-a_i)

    click_i = click_pair_i | click_extra_i
    core = slice(pad_lo, pad_lo + n)
    candidates = np.flatnonzero(click_pair_s[core] | click_extra_s[core])

    # non-paralyzable dead time in whole pulse slots; blocked candidates do
    # not extend the blind interval
    if det_s.dead_time_ns > 0 and candidates.size:
        dead_slots = math.ceil(det_s.dead_time_ns / rates.rep_period_ns)
        keep = []
        next_free = -1
        for k in candidates:
            if k >= next_free:
                keep.append(k)
                next_free = k + dead_slots
        clicks = np.asarray(keep, dtype=np.int64)
    else:
        clicks = candidates.astype(np.int64)

    records = np.zeros(clicks.size, dtype=RECORD_DTYPE)
    records["pulse_index"] = base + clicks
    records["signal_detected"] = True
    if clicks.size:
        cand = np.stack([click_i[clicks + pad_lo + m] for m in ms])
        toff = np.where(cand, offsets[:, None], np.inf).min(axis=0)
        if det_i.dark_prob_per_gate > 0:
            fired = rng.random(clicks.size) < det_i.dark_prob_per_gate
            dark_t = rng.random(clicks.size) * det_i.gate_width_ns
            toff = np.minimum(toff, np.where(fired, dark_t, np.inf))
        hit = np.isfinite(toff)
        records["idler_detected"] = hit
        records["idler_time_offset"] = np.where(hit, toff, np.nan)
    return records


def simulate_pulses(rates: ChannelRates,
                    detectors: tuple[DetectorModel, DetectorModel],
                    n_pulses: int, seed: int,
                    block_size: int = DEFAULT_BLOCK,
                    workers: int = 1) -> np.ndarray:
    """Run the detection-chain Monte Carlo over n_pulses pulse slots.

    Returns a structured array (RECORD_DTYPE) with one row per signal
    click. Deterministic for fixed (rates, detectors, n_pulses, seed,
    block_size) independent of workers.

    Raises:
        ValueError: mu_pair >= 0.5 (multi-pair model validity), bad pulse
            count, or a block size that violates the dead-time bias bound.
    """
    det_s, det_i = detectors
    if det_s.kind != "free_running" or det_i.kind != "gated":
        raise ValueError("expected (free_running signal, gated idler) "
                         "detector pair")
    if rates.mu_pair >= 0.5:
        raise ValueError(f"mu_pair {rates.mu_pair:g} >= 0.5 is outside the "
                         "validity of the per-pulse statistics model")
    if n_pulses <= 0:
        raise ValueError("n_pulses must be positive")
    block_ns = block_size * rates.rep_period_ns
    if det_s.dead_time_ns > 0 and det_s.dead_time_ns / block_ns \
            > MAX_BLOCK_BIAS:
        raise ValueError("block_size too small: dead-time boundary bias "
                         f"{det_s.dead_time_ns / block_ns:.2e} exceeds "
                         f"{MAX_BLOCK_BIAS:g}")

    blocks = []
    start = 0
    index = 0
    while start < n_pulses:
        n = min(block_size, n_pulses - start)
        blocks.append((n, index, start))
        start += n
        index += 1

    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                _simulate_block,
                *zip(*[(rates, det_s, det_i, n, seed, idx, base)
                       for n, idx, base in blocks])))
    else:
        parts = [_simulate_block(rates, det_s, det_i, n, seed, idx, base)
                 for n, idx, base in blocks]
    return np.concatenate(parts) if parts else np.zeros(0, RECORD_DTYPE)


def histogram(records: np.ndarray, bin_width_ns: float = 1.0,
              span_ns: float = 50.0,
              rep_period_ns: float = 1e9 / 76e6) -> TimingHistogram:
    """Bin idler click offsets; normalized column scales the accidental
    comb (all peaks except the one nearest the electronic delay) to 1."""
    ratio = span_ns / bin_width_ns
    n_bins = round(ratio)
    if abs(ratio - n_bins) > 1e-9 or n_bins < 1:
        raise ValueError("bin width must divide the span evenly")
    edges = np.linspace(0.0, span_ns, n_bins + 1)
    off = records["idler_time_offset"][records["idler_detected"]]
    counts, _ = np.histogram(off, bins=edges)
    return TimingHistogram(bin_edges=edges, counts=counts,
                           rep_period_ns=rep_period_ns)


def normalize_histogram(hist: TimingHistogram, true_offset_ns: float = 22.0,
                        window_ns: float = 2.0) -> TimingHistogram:
    """Fill the normalized column: accidental-peak mean window count -> 1.

    Accidental peaks are the rep-period comb around true_offset excluding
    the true peak itself.
    """
    centers = hist.bin_centers()
    span = hist.bin_edges[-1]
    acc = []
    m = math.ceil(-true_offset_ns / hist.rep_period_ns)
    while True:
        t = true_offset_ns + m * hist.rep_period_ns
        if t >= span:
            break
        if m != 0:
            sel = np.abs(centers - t) <= window_ns / 2.0
            acc.append(hist.counts[sel].sum())
        m += 1
    scale = float(np.mean(acc)) if acc else 0.0
    if scale <= 0:
        raise ValueError("no accidental counts to normalize against")
    hist.normalized = hist.counts / scale
    return hist


def car(records: np.ndarray, window_ns: float = 2.0,
        true_offset_ns: float = 22.0,
        accidental_offset_ns: float | None = None,
        rep_period_ns: float = 1e9 / 76e6) -> tuple[float, float]:
    """Coincidences-to-accidentals ratio with Poisson error propagation.

    C and A count gated idler clicks within +-window/2 of the true-pair
    offset and of the accidental offset (default one rep period earlier).

    Raises:
        ValueError: no accidental counts (CAR undefined, not infinite).
    """
    if accidental_offset_ns is None:
        accidental_offset_ns = true_offset_ns - rep_period_ns
    off = records["idler_time_offset"][records["idler_detected"]]
    c = int(np.count_nonzero(np.abs(off - true_offset_ns) <= window_ns / 2))
    a = int(np.count_nonzero(
        np.abs(off - accidental_offset_ns) <= window_ns / 2))
    if a == 0:
        raise ValueError("zero accidental counts; CAR undefined at this "
                         "sample size")
    value = c / a
    stderr = value * math.sqrt(1.0 / max(c, 1) + 1.0 / a)
    return value, stderr


def pulse_outcome_probs(rates: ChannelRates,
                        detectors: tuple[DetectorModel, DetectorModel],
                        ) -> dict[str, float]:
    """Per-pulse click probabilities from exact zero-click algebra.

    With thermal pair statistics P(no click) follows from the geometric
    generating function, with Poisson from the exponential; p_joint is
    the same-pulse signal-and-idler click probability, which exceeds
    p_signal * p_idler by the pair correlation. dead_time_factor is the
    non-paralyzable signal-arm live fraction 1/(1 + R_s tau_dead).
    """
    det_s, det_i = detectors
    q_s, q_i, a_s, a_i, dark_s = _click_probs(rates, det_s, det_i)
    mu = rates.mu_pair

    if rates.pair_statistics == "thermal":
        no_s_pair = 1.0 / (1.0 + mu * q_s)
        no_i_pair = 1.0 / (1.0 + mu * q_i)
        no_both_pair = 1.0 / (1.0 + mu * (q_s + q_i - q_s * q_i))
    else:
        no_s_pair = math.exp(-mu * q_s)
        no_i_pair = math.exp(-mu * q_i)
        no_both_pair = math.exp(-mu * (q_s + q_i - q_s * q_i))

    p_no_s = math.exp(-a_s) * (1.0 - dark_s) * no_s_pair
    p_no_i = math.exp(-a_i) * no_i_pair
    # joint: no signal AND no idler click from the same pulse
    p_no_both = math.exp(-a_s - a_i) * (1.0 - dark_s) * no_both_pair
    p_s = 1.0 - p_no_s
    p_i = 1.0 - p_no_i
    p_coinc = 1.0 - p_no_s - p_no_i + p_no_both

    dead = 1.0
    if det_s.dead_time_ns > 0:
        r_s = p_s * rates.rep_rate_hz
        dead = 1.0 / (1.0 + r_s * det_s.dead_time_ns * 1e-9)
    return {"p_signal": p_s, "p_idler": p_i, "p_joint": p_coinc,
            "dead_time_factor": dead}


def analytic_car(rates: ChannelRates,
                 detectors: tuple[DetectorModel, DetectorModel],
                 window_ns: float = 2.0) -> float:
    """Closed-form CAR for the same per-pulse model as the Monte Carlo.

    To first order in mu and the noise terms this reduces to the familiar
    CAR ~ 1 + mu q_s q_i / (p_s p_i). Neglected relative to the Monte
    Carlo: first-click shadowing inside the gate (relative error ~ p_i)
    and signal dead time, which scales C and A identically and cancels.
    """
    det_i = detectors[1]
    probs = pulse_outcome_probs(rates, detectors)
    dark_win = det_i.dark_prob_per_gate * window_ns / det_i.gate_width_ns
    c_term = probs["p_joint"] + probs["p_signal"] * dark_win
    a_term = probs["p_signal"] * (probs["p_idler"] + dark_win)
    return c_term / a_term


def pair_metrics(rates: ChannelRates,
                 detectors: tuple[DetectorModel, DetectorModel],
                 average_power_w: float,
                 signal_bandwidth_nm: float = 0.5,
                 records: np.ndarray | None = None,
                 n_pulses: int | None = None) -> dict[str, float]:
    """Detected and inferred pair-rate figures of merit.

    Detected coincidences include the signal detector's non-paralyzable
    dead-time factor 1/(1 + R_s tau_dead); the inside-wire rate is the
    detected rate back-propagated through the collection and detection
    efficiencies only, so at high power it saturates with the detector
    (an inference floor, not a physical drop in generated pairs).
    Brightness normalizes the inferred rate by signal bandwidth and
    average pump power. With records given, the detected coincidence
    rate is measured from them instead of the analytic model.

    Raises:
        ValueError: zero total efficiency on either channel.
    """
    det_s, det_i = detectors
    q_s, q_i, _, _, _ = _click_probs(rates, det_s, det_i)
    if q_s == 0.0 or q_i == 0.0:
        raise ValueError("cannot back-propagate through zero efficiency")
    rep = rates.rep_rate_hz

    probs = pulse_outcome_probs(rates, detectors)
    p_s = probs["p_signal"]
    p_i = probs["p_idler"]
    p_coinc = probs["p_joint"]
    dead_factor = probs["dead_time_factor"]

    if records is not None:
        if n_pulses is None:
            raise ValueError("n_pulses required with records")
        off = records["idler_time_offset"][records["idler_detected"]]
        c = int(np.count_nonzero(np.abs(off - det_i.electronic_delay_ns)
                                 <= 1.0))
        acc_off = det_i.electronic_delay_ns - rates.rep_period_ns
        a = int(np.count_nonzero(np.abs(off - acc_off) <= 1.0))
        detected_per_pulse = max(c - a, 0) / n_pulses
    else:
        detected_per_pulse = (p_coinc - p_s * p_i) * dead_factor

    detected_rate = detected_per_pulse * rep
    inside_rate = detected_rate / (q_s * q_i)
    power_mw = average_power_w * 1e3
    brightness = inside_rate / (signal_bandwidth_nm * power_mw) \
        if power_mw > 0 else float("nan")
    return {
        "pairs_per_pulse_detected": detected_per_pulse,
        "pairs_per_s_detected": detected_rate,
        "pairs_per_s_inside_wire": inside_rate,
        "brightness_per_s_per_nm_per_mw": brightness,
        "signal_click_prob": p_s,
        "dead_time_factor": dead_factor,
    }
