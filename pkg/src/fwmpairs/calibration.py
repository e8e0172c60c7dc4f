"""Pulse-length calibration fit and delay-scan gaussian fit.

The power-series fit compares measured pair probability and CAR curves
against the closed-form detection model, treating the in-microwire pulse
length (and optionally the signal dead time and Raman reference rate) as
free parameters. The forward model exploits the exact scalings of the
physics layer: mu scales as P^2/tau, Raman singles as P * raman_ref, and
leakage as P, so one reference assembly of ChannelRates is enough and the
objective is smooth and cheap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import curve_fit

from .counting import ChannelRates, DetectorModel, analytic_car, pair_metrics

__all__ = [
    "FitError",
    "MeasurementSeries",
    "FitResult",
    "ForwardModel",
    "read_series",
    "fit",
    "fit_delay_scan",
]

FIT_PARAMS = ("tau_eff_ps", "dead_time_ns", "raman_ref")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FitError(RuntimeError):
    """Fit could not produce a trustworthy interior minimum."""


@dataclass(frozen=True)
class MeasurementSeries:
    """One measured power series: (coupled average power, value, sigma)."""

    powers_w: tuple[float, ...]
    values: tuple[float, ...]
    sigmas: tuple[float, ...]
    kind: str   # "pair_probability" or "car"

    def __post_init__(self):
        if self.kind not in ("pair_probability", "car"):
            raise ValueError(f"unknown series kind {self.kind!r}")
        n = len(self.powers_w)
        if n == 0 or len(self.values) != n or len(self.sigmas) != n:
            raise ValueError("powers, values, sigmas must have equal "
                             "nonzero length")
        if any(b <= a for a, b in zip(self.powers_w, self.powers_w[1:])):
            raise ValueError("powers must be strictly increasing")
        if min(self.sigmas) <= 0:
            raise ValueError("sigmas must be positive")


def read_series(path, kind: str) -> MeasurementSeries:
    """Read a power-series CSV with columns power_w, value, sigma."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh
                                      if not line.startswith("#")) if r]
    if not rows or [c.strip() for c in rows[0]] != ["power_w", "value",
                                                    "sigma"]:
        raise ValueError("series CSV must have header 'power_w,value,sigma'")
    cols = list(zip(*[(float(a), float(b), float(c)) for a, b, c in rows[1:]]))
    return MeasurementSeries(powers_w=cols[0], values=cols[1],
                             sigmas=cols[2], kind=kind)


@dataclass
class FitResult:
    params: dict[str, float]
    uncertainties: dict[str, float]
    residual: float                      # chi-squared at the minimum
    per_series_residuals: tuple[float, ...]
    covariance: np.ndarray               # ordered like param_order
    param_order: tuple[str, ...]

    @property
    def tau_eff_ps(self) -> float:
        return self.params["tau_eff_ps"]


@dataclass(frozen=True)
class ForwardModel:
    """Closed-form predictions for measured series at any power.

    base holds ChannelRates assembled at (ref_power_w, ref_tau_ps,
    ref_raman_ref); predictions rescale it exactly rather than re-running
    the mode solver.
    """

    base: ChannelRates
    detectors: tuple[DetectorModel, DetectorModel]
    ref_power_w: float
    ref_tau_ps: float
    ref_raman_ref: float
    average_power_is_per_pump: bool = True

    def rates_at(self, power_w: float, tau_eff_ps: float | None = None,
                 raman_ref: float | None = None) -> ChannelRates:
        tau = self.ref_tau_ps if tau_eff_ps is None else tau_eff_ps
        raman = self.ref_raman_ref if raman_ref is None else raman_ref
        if power_w < 0 or tau <= 0 or raman < 0:
            raise ValueError("power >= 0, tau > 0, raman_ref >= 0 required")
        p_scale = power_w / self.ref_power_w
        mu = self.base.mu_pair * p_scale ** 2 * (self.ref_tau_ps / tau)
        r_scale = p_scale * (raman / self.ref_raman_ref
                             if self.ref_raman_ref > 0 else 1.0)
        return replace(self.base,
                       mu_pair=mu,
                       raman_s=self.base.raman_s * r_scale,
                       raman_i=self.base.raman_i * r_scale,
                       leakage_s=self.base.leakage_s * p_scale,
                       leakage_i=self.base.leakage_i * p_scale)

    def detectors_at(self, dead_time_ns: float | None = None):
        det_s, det_i = self.detectors
        if dead_time_ns is not None:
            det_s = replace(det_s, dead_time_ns=dead_time_ns)
        return det_s, det_i

    def predict(self, kind: str, power_w: float, **params) -> float:
        dead = params.pop("dead_time_ns", None)
        rates = self.rates_at(power_w, **params)
        dets = self.detectors_at(dead)
        if kind == "car":
            return analytic_car(rates, dets)
        if kind == "pair_probability":
            # inferred in-wire pair probability per pulse: detected
            # coincidences (accidentals subtracted, dead time included)
            # back-propagated through the efficiencies
            m = pair_metrics(rates, dets, average_power_w=power_w)
            return m["pairs_per_s_inside_wire"] / rates.rep_rate_hz
        raise ValueError(f"unknown series kind {kind!r}")


def _chi_squared(model: ForwardModel, series, params):
    per = []
    for s in series:
        acc = 0.0
        for p, v, sig in zip(s.powers_w, s.values, s.sigmas):
            acc += ((model.predict(s.kind, p, **params) - v) / sig) ** 2
        per.append(acc)
    return sum(per), tuple(per)


def _golden_section(f, lo, hi, tol, max_iter=120):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit(series: list[MeasurementSeries], free_params: set[str],
        bounds: dict[str, tuple[float, float]], model: ForwardModel,
        grid_points: int = 21) -> FitResult:
    """Chi-squared fit of the detection model to measured power series.

    Coarse grid scan over the free parameters followed by coordinate-wise
    golden-section refinement; fully deterministic. Uncertainties come
    from the curvature (finite-difference Hessian) at the minimum.

    Raises:
        FitError: fewer than 4 points total, or the minimum sits on a
            bound (reported rather than silently clamped).
        ValueError: unknown parameter names or malformed bounds.
    """
    order = tuple(p for p in FIT_PARAMS if p in free_params)
    if set(free_params) - set(FIT_PARAMS):
        raise ValueError(f"unknown fit parameters "
                         f"{sorted(set(free_params) - set(FIT_PARAMS))}")
    if not order:
        raise ValueError("no free parameters")
    n_points = sum(len(s.powers_w) for s in series)
    if n_points < 4:
        raise FitError(f"need at least 4 data points, got {n_points}")
    for p in order:
        lo, hi = bounds[p]
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"bounds for {p} must be finite with lo < hi")

    def objective(theta):
        return _chi_squared(model, series, dict(zip(order, theta)))[0]

    # coarse grid
    axes = [np.linspace(*bounds[p], grid_points) for p in order]
    best, best_val = None, math.inf
    for idx in np.ndindex(*(len(ax) for ax in axes)):
        theta = tuple(ax[i] for ax, i in zip(axes, idx))
        val = objective(theta)
        if val < best_val:
            best, best_val = theta, val

    # coordinate golden-section refinement around the grid winner
    theta = list(best)
    for _ in range(60):
        prev = best_val
        for k, p in enumerate(order):
            lo, hi = bounds[p]
            step = (hi - lo) / (grid_points - 1)
            a = max(lo, theta[k] - step)
            b = min(hi, theta[k] + step)

            def along(x, k=k):
                t = list(theta)
                t[k] = x
                return objective(t)

            theta[k] = _golden_section(along, a, b, tol=(hi - lo) * 1e-7)
        best_val = objective(theta)
        if prev - best_val < 1e-12 * max(1.0, abs(prev)):
            break

    for k, p in enumerate(order):
        lo, hi = bounds[p]
        if min(theta[k] - lo, hi - theta[k]) < 1e-3 * (hi - lo):
            raise FitError(f"minimum for {p} sits on the bound "
                           f"[{lo:g}, {hi:g}]; widen the bounds")

    # curvature uncertainties: chi2 ~ min + dtheta' H dtheta, cov = 2 H^-1
    m = len(order)
    hess = np.zeros((m, m))
    hs = [1e-3 * (bounds[p][1] - bounds[p][0]) for p in order]
    f0 = objective(theta)

    def at(offsets):
        t = list(theta)
        for k, d in offsets:
            t[k] += d
        return objective(t)

    for i in range(m):
        hess[i, i] = (at([(i, hs[i])]) - 2 * f0 + at([(i, -hs[i])])) \
            / hs[i] ** 2
        for j in range(i + 1, m):
            hess[i, j] = hess[j, i] = (
                at([(i, hs[i]), (j, hs[j])]) - at([(i, hs[i]), (j, -hs[j])])
                - at([(i, -hs[i]), (j, hs[j])])
                + at([(i, -hs[i]), (j, -hs[j])])) / (4 * hs[i] * hs[j])
    try:
        cov = 2.0 * np.linalg.inv(hess)
        unc = {p: float(np.sqrt(max(cov[k, k], 0.0)))
               for k, p in enumerate(order)}
    except np.linalg.LinAlgError:
        cov = np.full((m, m), np.nan)
        unc = {p: float("nan") for p in order}

    chi2, per = _chi_squared(model, series, dict(zip(order, theta)))
    params = dict(zip(order, (float(t) for t in theta)))
    return FitResult(params=params, uncertainties=unc, residual=chi2,
                     per_series_residuals=per, covariance=cov,
                     param_order=order)


def _gaussian_plus_background(t, amplitude, center, sigma, background):
    return background + amplitude * np.exp(-(t - center) ** 2
                                           / (2.0 * sigma ** 2))


def fit_delay_scan(delays_ps, coincidences,
                   sigmas=None) -> dict[str, float]:
    """Gaussian-plus-constant least squares on a pump-delay scan.

    Returns amplitude, center_ps, sigma_ps, fwhm_ps, background and
    their standard errors (suffix _err).

    Raises:
        FitError: fewer than 5 points or data too flat to constrain a
            peak.
    """
    t = np.asarray(delays_ps, dtype=float)
    y = np.asarray(coincidences, dtype=float)
    if t.size < 5 or y.size != t.size:
        raise FitError("delay-scan fit needs at least 5 matched points")
    spread = y.max() - y.min()
    if spread <= 0 or spread < 1e-12 * max(1.0, abs(y.max())):
        raise FitError("delay-scan data is flat; gaussian fit is "
                       "degenerate")
    background = float(y.min())
    amplitude = float(spread)
    weights = np.clip(y - background, 0.0, None)
    wsum = weights.sum()
    center = float((t * weights).sum() / wsum) if wsum > 0 else float(t.mean())
    var = float(((t - center) ** 2 * weights).sum() / wsum) if wsum > 0 \
        else float(np.var(t))
    sigma0 = math.sqrt(max(var, (t[1] - t[0]) ** 2))
    p0 = (amplitude, center, sigma0, background)
    try:
        popt, pcov = curve_fit(_gaussian_plus_background, t, y, p0=p0,
                               sigma=sigmas, absolute_sigma=sigmas is not None,
                               maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"delay-scan fit did not converge: {exc}") from exc
    errs = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    amp, cen, sig, bg = popt
    sig = abs(float(sig))
    fwhm = 2.0 * math.sqrt(2.0 * math.log(2.0)) * sig
    return {
        "amplitude": float(amp), "amplitude_err": float(errs[0]),
        "center_ps": float(cen), "center_ps_err": float(errs[1]),
        "sigma_ps": sig, "sigma_ps_err": float(errs[2]),
        "fwhm_ps": fwhm,
        "fwhm_ps_err": 2.0 * math.sqrt(2.0 * math.log(2.0))
                       * float(errs[2]),
        "background": float(bg), "background_err": float(errs[3]),
    }
