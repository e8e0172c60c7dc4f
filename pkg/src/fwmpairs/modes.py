"""Vectorial step-index mode solving for the suspended microwire.

The index contrast between the As2Se3 core (~2.81) and PMMA cladding (~1.48)
is far outside the weak-guidance regime, so the solver works with the full
hybrid-mode characteristic equation for azimuthal order 1,

    (J1'/(u J1) + K1'/(w K1)) (n1^2 J1'/(u J1) + n2^2 K1'/(w K1))
        = n_eff^2 (1/u^2 + 1/w^2)^2

with u = k0 a sqrt(n1^2 - n_eff^2), w = k0 a sqrt(n_eff^2 - n2^2). The
fundamental HE11 mode is the root with the largest n_eff. LP approximations
are deliberately not used anywhere.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.linalg import svd
from scipy.special import j0, j1, k0 as bessel_k0, k1 as bessel_k1

from .materials import AS2SE3, PMMA, MaterialModel, refractive_index

__all__ = [
    "WaveguideGeometry",
    "ModeSolution",
    "ModeSolverError",
    "characteristic_residual",
    "solve_fundamental_mode",
    "effective_area",
    "nonlinear_gamma",
    "beta_derivatives",
]

# residual acceptance for a converged root (normalized units)
RESIDUAL_TOL = 1e-10
# segments for the bracket scan over (n_clad, n_core)
SCAN_SEGMENTS = 200


class ModeSolverError(RuntimeError):
    """Raised when no guided-mode root satisfies the residual tolerance."""


@dataclass(frozen=True)
class WaveguideGeometry:
    """Tapered-microwire waist parameters and loss budget (dB quantities)."""

    length_m: float = 0.12
    core_diameter_nm: float = 550.0
    core: MaterialModel = AS2SE3
    cladding: MaterialModel = PMMA
    propagation_loss_db_per_m: float = 5.1
    input_coupling_loss_db: float = 4.7
    output_coupling_loss_db: float = 4.7

    def __post_init__(self):
        # upper bound is generous so bulk-limit checks at tens of um pass
        if not 100.0 < self.core_diameter_nm < 100_000.0:
            raise ValueError("core_diameter_nm must lie in (100, 100000)")
        if self.length_m <= 0:
            raise ValueError("length_m must be positive")
        if min(self.propagation_loss_db_per_m, self.input_coupling_loss_db,
               self.output_coupling_loss_db) < 0:
            raise ValueError("losses must be non-negative")

    @property
    def alpha_per_m(self) -> float:
        """Linear power attenuation coefficient (1/m)."""
        return self.propagation_loss_db_per_m * np.log(10.0) / 10.0

    def effective_length_m(self) -> float:
        a = self.alpha_per_m
        if a == 0.0:
            return self.length_m
        return (1.0 - np.exp(-a * self.length_m)) / a


@dataclass(frozen=True)
class ModeSolution:
    """Solved HE11 mode at one wavelength.

    u, w are the usual normalized transverse wavenumbers; amp_* are the
    (Ez, Hz) boundary amplitudes for core/cladding needed to reconstruct the
    vector fields (Hz amplitudes absorb the free-space impedance).
    """

    wavelength_nm: float
    n_eff: float
    beta_per_m: float
    core_radius_m: float
    n_core: float
    n_clad: float
    u: float
    w: float
    amp_core_ez: float
    amp_core_hz: float
    amp_clad_ez: float
    amp_clad_hz: float
    residual: float


def _j1p(x):
    # J1'(x) = J0(x) - J1(x)/x
    return j0(x) - j1(x) / x


def _k1p(x):
    # K1'(x) = -(K0(x) + K1(x)/x)
    return -(bessel_k0(x) + bessel_k1(x) / x)


def characteristic_residual(n_eff: float, v: float, n_core: float,
                            n_clad: float) -> float:
    """Normalized hybrid-mode (azimuthal order 1) characteristic function.

    Vanishes at guided-mode eigenvalues. Normalized by the magnitude of its
    terms so the root-acceptance threshold is scale-free.
    """
    u = v * np.sqrt(max(n_core ** 2 - n_eff ** 2, 0.0)) / np.sqrt(
        n_core ** 2 - n_clad ** 2)
    w = v * np.sqrt(max(n_eff ** 2 - n_clad ** 2, 0.0)) / np.sqrt(
        n_core ** 2 - n_clad ** 2)
    if u <= 0.0 or w <= 0.0:
        return np.nan
    ju = _j1p(u) / (u * j1(u))
    kw = _k1p(w) / (w * bessel_k1(w))
    lhs = (ju + kw) * (n_core ** 2 * ju + n_clad ** 2 * kw)
    rhs = n_eff ** 2 * (1.0 / u ** 2 + 1.0 / w ** 2) ** 2
    scale = abs(lhs) + abs(rhs)
    return (lhs - rhs) / scale if scale > 0 else np.nan


def _solve_root(f, lo: float, hi: float, f_lo: float, f_hi: float) -> float:
    """Bisection to a tight bracket, then secant polish."""
    a, b, fa, fb = lo, hi, f_lo, f_hi
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if not np.isfinite(fm):
            break
        if fa * fm <= 0.0:
            b, fb = m, fm
        else:
            a, fa = m, fm
        if b - a < 1e-13 * max(1.0, abs(b)):
            break
    x0, x1 = a, b
    f0, f1 = f(x0), f(x1)
    for _ in range(20):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not (a - 1e-9 <= x2 <= b + 1e-9) or not np.isfinite(x2):
            break
        x0, f0, x1 = x1, f1, x2
        f1 = f(x1)
        if abs(f1) < 1e-15:
            break
    return x1 if abs(f1) <= abs(f0) else x0


@functools.lru_cache(maxsize=100_000)
def solve_fundamental_mode(geometry: WaveguideGeometry,
                           wavelength_nm: float) -> ModeSolution:
    """Solve the HE11 mode of the microwire at one wavelength.

    Scans the guided range for sign changes of the characteristic function,
    refines each by bisection plus a secant polish, keeps roots whose
    normalized residual is below RESIDUAL_TOL, and returns the one with the
    largest n_eff (HE11).  The scan grid is uniform in the core parameter u,
    not in n_eff: higher-order roots sit roughly pi apart in u, so a u-grid
    with several segments per pi resolves them all even at large V where
    they pile up quadratically close to n_core in n_eff.

    Raises:
        ModeSolverError: no root meets the residual tolerance.
        ValueError: wavelength outside either material's validity window.
    """
    lam_m = wavelength_nm * 1e-9
    a_m = 0.5 * geometry.core_diameter_nm * 1e-9
    n1 = refractive_index(geometry.core, wavelength_nm)
    n2 = refractive_index(geometry.cladding, wavelength_nm)
    if n1 <= n2:
        raise ModeSolverError("core index must exceed cladding index")
    k0 = 2.0 * np.pi / lam_m
    v = k0 * a_m * np.sqrt(n1 ** 2 - n2 ** 2)

    def f(n_eff):
        return characteristic_residual(n_eff, v, n1, n2)

    k0a = k0 * a_m
    u_min = k0a * np.sqrt(n1 ** 2 - (n1 - 1e-6) ** 2)
    u_max = k0a * np.sqrt(n1 ** 2 - (n2 + 1e-6) ** 2)
    segments = max(SCAN_SEGMENTS, int(np.ceil(8.0 * v)))
    u_grid = np.linspace(u_min, u_max, segments + 1)
    grid = np.sqrt(n1 ** 2 - (u_grid / k0a) ** 2)[::-1]
    vals = np.array([f(x) for x in grid])
    best = None
    for i in range(len(grid) - 1):
        fa, fb = vals[i], vals[i + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0.0:
            continue
        root = _solve_root(f, grid[i], grid[i + 1], fa, fb)
        res = abs(f(root))
        if res < RESIDUAL_TOL and (best is None or root > best[0]):
            best = (root, res)
    if best is None:
        raise ModeSolverError(
            f"no guided HE11 root at {wavelength_nm:g} nm "
            f"(V = {v:.3f}); residual tolerance {RESIDUAL_TOL:g}")
    n_eff, res = best
    u = k0 * a_m * np.sqrt(n1 ** 2 - n_eff ** 2)
    w = k0 * a_m * np.sqrt(n_eff ** 2 - n2 ** 2)
    amps = _boundary_amplitudes(n_eff, u, w, n1, n2)
    return ModeSolution(
        wavelength_nm=float(wavelength_nm),
        n_eff=float(n_eff),
        beta_per_m=float(n_eff * k0),
        core_radius_m=a_m,
        n_core=float(n1),
        n_clad=float(n2),
        u=float(u),
        w=float(w),
        amp_core_ez=float(amps[0]),
        amp_core_hz=float(amps[1]),
        amp_clad_ez=float(amps[2]),
        amp_clad_hz=float(amps[3]),
        residual=float(res),
    )


def _boundary_matrix(n_eff: float, u: float, w: float, n1: float,
                     n2: float) -> np.ndarray:
    """Continuity conditions for (Ez, Hz, Ephi, Hphi) at the core boundary.

    Unknown vector is (A, B, C, D): core Ez/Hz and cladding Ez/Hz amplitudes
    with Hz scaled by the free-space impedance. Eliminating (C, D) from
    these four rows reproduces characteristic_residual identically, so the
    null vector at a solved root gives the physical amplitude ratios.
    """
    ju, jp = j1(u), _j1p(u)
    kw, kp = bessel_k1(w), _k1p(w)
    q = 1.0 / n_eff  # k0 / beta
    return np.array([
        [ju, 0.0, -kw, 0.0],
        [0.0, ju, 0.0, -kw],
        [ju / u ** 2, q * jp / u, kw / w ** 2, q * kp / w],
        [q * n1 ** 2 * jp / u, ju / u ** 2, q * n2 ** 2 * kp / w,
         kw / w ** 2],
    ])


def _boundary_amplitudes(n_eff, u, w, n1, n2):
    m = _boundary_matrix(n_eff, u, w, n1, n2)
    _, _, vt = svd(m)
    null = vt[-1]
    # fix sign convention: core Ez amplitude positive
    if null[0] < 0:
        null = -null
    return null


def _field_components(mode: ModeSolution, r_over_a: np.ndarray):
    """Radial profiles (er, ephi, ez, hr, hphi) of the HE11 field.

    For the chosen orientation Er, Ez, Hphi carry cos(phi) while Ephi, Hr
    carry sin(phi); a common phase factor is dropped so all profiles are
    real with consistent relative magnitudes (H impedance-scaled). rho is
    radius over core radius.
    """
    a_ez, a_hz, c_ez, c_hz = (mode.amp_core_ez, mode.amp_core_hz,
                              mode.amp_clad_ez, mode.amp_clad_hz)
    rho = np.asarray(r_over_a, dtype=float)
    inside = rho <= 1.0
    out = ~inside
    er = np.empty_like(rho)
    ephi = np.empty_like(rho)
    ez = np.empty_like(rho)
    hr = np.empty_like(rho)
    hphi = np.empty_like(rho)
    ri = np.where(rho < 1e-9, 1e-9, rho)
    k0a = mode.u / np.sqrt(mode.n_core ** 2 - mode.n_eff ** 2)
    ne = mode.n_eff

    ur = mode.u * ri[inside]
    f, fp = j1(ur), _j1p(ur)
    pref = k0a / mode.u ** 2
    n1sq = mode.n_core ** 2
    er[inside] = pref * (ne * mode.u * a_ez * fp + a_hz * f / ri[inside])
    ephi[inside] = -pref * (ne * a_ez * f / ri[inside] + mode.u * a_hz * fp)
    ez[inside] = a_ez * f
    hr[inside] = pref * (ne * mode.u * a_hz * fp + n1sq * a_ez * f / ri[inside])
    hphi[inside] = pref * (ne * a_hz * f / ri[inside] + n1sq * mode.u * a_ez * fp)

    wr = mode.w * ri[out]
    g, gp = bessel_k1(wr), _k1p(wr)
    prefc = -k0a / mode.w ** 2
    n2sq = mode.n_clad ** 2
    er[out] = prefc * (ne * mode.w * c_ez * gp + c_hz * g / ri[out])
    ephi[out] = -prefc * (ne * c_ez * g / ri[out] + mode.w * c_hz * gp)
    ez[out] = c_ez * g
    hr[out] = prefc * (ne * mode.w * c_hz * gp + n2sq * c_ez * g / ri[out])
    hphi[out] = prefc * (ne * c_hz * g / ri[out] + n2sq * mode.w * c_ez * gp)
    return er, ephi, ez, hr, hphi


def effective_area(mode: ModeSolution, variant: str = "poynting") -> float:
    """Nonlinear effective area (um^2) of the solved mode.

    A_eff = (integral F dA)^2 / integral F^2 dA with F the mode intensity.
    The default takes F as the axial Poynting density built from the full
    vector fields (the definition that tracks tabulated microwire values);
    variant="full" uses F = |E|^2 and variant="transverse" uses |E_t|^2.
    """
    r = np.linspace(0.0, 1.0 + 8.0 / mode.w, 4000)
    er, ephi, ez, hr, hphi = _field_components(mode, r)
    if variant == "poynting":
        alpha = er * hphi        # cos^2(phi) part of the density
        beta = -ephi * hr        # sin^2(phi) part
    elif variant == "full":
        alpha = er ** 2 + ez ** 2
        beta = ephi ** 2
    elif variant == "transverse":
        alpha = er ** 2
        beta = ephi ** 2
    else:
        raise ValueError("variant must be 'poynting', 'full' or 'transverse'")
    # phi integrals: int cos^4 = int sin^4 = 3pi/4, int cos^2 sin^2 = pi/4
    i2 = np.trapezoid((alpha + beta) * np.pi * r, r)
    i4 = np.trapezoid((0.75 * alpha ** 2 + 0.5 * alpha * beta
                       + 0.75 * beta ** 2) * np.pi * r, r)
    a2 = mode.core_radius_m ** 2
    return float(i2 ** 2 / i4 * a2 * 1e12)  # m^2 -> um^2, r in units of a


def nonlinear_gamma(n2_m2_per_w: float, wavelength_nm: float,
                    aeff_um2: float) -> float:
    """Nonlinear parameter gamma = 2 pi n2 / (lambda A_eff) in 1/(W m)."""
    if aeff_um2 <= 0 or wavelength_nm <= 0:
        raise ValueError("wavelength and A_eff must be positive")
    return 2.0 * np.pi * n2_m2_per_w / (wavelength_nm * 1e-9 * aeff_um2 * 1e-12)


def beta_derivatives(geometry: WaveguideGeometry, wavelength_nm: float,
                     max_order: int = 3) -> dict[int, float]:
    """Propagation-constant derivatives beta_n = d^n beta / d omega^n.

    Five-point central stencils in angular frequency at a fixed step of
    1e-3 omega0. That step sits on a wide plateau where both truncation
    error and root-solver noise are negligible; stepping much finer
    amplifies solver noise as 1/h^n and corrupts the higher orders. A
    half-step cross-check guards the result.

    Returns:
        {0: beta, 1: beta1, ..., max_order: ...} in SI units (s^n/m).

    Raises:
        ModeSolverError: the two step sizes disagree, meaning no clean
            plateau exists at this wavelength.
    """
    if not 1 <= max_order <= 3:
        raise ValueError("max_order must be 1, 2 or 3")
    omega0 = 2.0 * np.pi * C_LIGHT / (wavelength_nm * 1e-9)

    def beta_of(omega):
        lam_nm = 2.0 * np.pi * C_LIGHT / omega * 1e9
        return solve_fundamental_mode(geometry, round(lam_nm, 9)).beta_per_m

    def estimates(h):
        b = {k: beta_of(omega0 + k * h) for k in (-2, -1, 0, 1, 2)}
        return {
            0: b[0],
            1: (-b[2] + 8 * b[1] - 8 * b[-1] + b[-2]) / (12 * h),
            2: (-b[2] + 16 * b[1] - 30 * b[0] + 16 * b[-1] - b[-2])
               / (12 * h ** 2),
            3: (b[2] - 2 * b[1] + 2 * b[-1] - b[-2]) / (2 * h ** 3),
        }

    h = omega0 * 1e-3
    est = estimates(h)
    chk = estimates(0.5 * h)
    rel_tol = {1: 1e-6, 2: 1e-3, 3: 5e-2}
    for order in range(1, max_order + 1):
        scale = max(abs(est[order]), abs(chk[order]))
        if scale > 0 and abs(est[order] - chk[order]) > rel_tol[order] * scale:
            raise ModeSolverError(
                f"beta_{order} finite difference did not stabilize at "
                f"{wavelength_nm:g} nm: {est[order]:.6e} vs {chk[order]:.6e}")
    return {k: chk[k] for k in range(0, max_order + 1)}
