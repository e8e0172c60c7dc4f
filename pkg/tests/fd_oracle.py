"""Independent finite-difference vector mode solver used as a test oracle.

Brute-force 2-D eigensolve on a Yee-staggered Cartesian grid, derived
directly from the frequency-domain curl equations with d/dz = -i beta and
nothing shared with the package's analytic Bessel-function solver. With
fields on the staggered points

    Ez (i, j)    Ex (i+1/2, j)    Ey (i, j+1/2)
    Hz (i+1/2, j+1/2)    Hx (i, j+1/2)    Hy (i+1/2, j)

eliminating Ez and Hz from the six curl components yields

    b [ex; ey] = Q [hx; hy]      b [hx; hy] = R [ex; ey]

so that b^2 is an eigenvalue of Q R, with b = beta/k0 and (all lengths in
units of 1/k0, U* forward differences, V* = -U*^T backward differences)

    Q = [[-Ux ezz^-1 Vy,     I + Ux ezz^-1 Vx],
         [-(I + Uy ezz^-1 Vy),   Uy ezz^-1 Vx]]
    R = [[Vx Uy,            -(eyy + Vx Ux)],
         [exx + Vy Uy,      -Vy Ux]]

Permittivity is sampled with sub-cell averaging: harmonic along the field's
normal direction for exx/eyy, arithmetic for ezz (tangential).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def _forward_diff(n: int, d: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="csr") / d


def _eps_grids(eps_fn, x0, y0, nx, ny, dx, sub=8):
    """Sample permittivity at the three staggered collocations.

    eps_fn(x, y) -> relative permittivity (vectorized). Returns diagonal
    vectors (exx, eyy, ezz) flattened in C order (y fastest? no: x index i,
    y index j with flat = i*ny + j).
    """
    off = (np.arange(sub) + 0.5) / sub - 0.5  # sub-offsets in units of dx
    ox, oy = np.meshgrid(off, off, indexing="ij")

    def cell_avg(xc, yc, mode):
        # xc, yc: arrays (nx, ny) of collocation centers
        acc = np.zeros((xc.shape[0], xc.shape[1], sub, sub))
        for a in range(sub):
            for b in range(sub):
                acc[:, :, a, b] = eps_fn(xc + ox[a, b] * dx,
                                         yc + oy[a, b] * dx)
        if mode == "zz":
            return acc.mean(axis=(2, 3))
        if mode == "xx":  # harmonic along x (axis 2), arithmetic along y
            return (1.0 / (1.0 / acc).mean(axis=2)).mean(axis=2)
        if mode == "yy":
            return (1.0 / (1.0 / acc).mean(axis=3)).mean(axis=2)
        raise ValueError(mode)

    xi = x0 + np.arange(nx) * dx
    yj = y0 + np.arange(ny) * dx
    xg, yg = np.meshgrid(xi, yj, indexing="ij")
    ezz = cell_avg(xg, yg, "zz")
    exx = cell_avg(xg + 0.5 * dx, yg, "xx")
    eyy = cell_avg(xg, yg + 0.5 * dx, "yy")
    return exx.ravel(), eyy.ravel(), ezz.ravel()


def fd_neff(eps_fn, wavelength_m: float, window_m: float, n_grid: int,
            sigma_guess: float, k_modes: int = 4) -> float:
    """Largest-n_eff guided mode of an arbitrary eps(x, y) profile.

    Args:
        eps_fn: relative permittivity function of (x, y) in metres,
            centered on the structure.
        wavelength_m: vacuum wavelength.
        window_m: full width of the square computational window.
        n_grid: grid points per side.
        sigma_guess: shift for the shift-invert eigensolve; slightly above
            the expected maximum eps.
        k_modes: eigenpairs to pull near the shift.

    Returns:
        n_eff of the fundamental (largest real eigenvalue below sqrt(eps_max)).
    """
    k0 = 2.0 * np.pi / wavelength_m
    nx = ny = n_grid
    dx_m = window_m / n_grid
    dx = k0 * dx_m  # normalized spacing
    x0 = -0.5 * window_m + 0.5 * dx_m

    exx, eyy, ezz = _eps_grids(eps_fn, x0, x0, nx, ny, dx_m)

    ix = sp.identity(nx, format="csr")
    iy = sp.identity(ny, format="csr")
    dfx = _forward_diff(nx, dx)
    dfy = _forward_diff(ny, dx)
    ux = sp.kron(dfx, iy, format="csr")
    uy = sp.kron(ix, dfy, format="csr")
    vx = -ux.T.tocsr()
    vy = -uy.T.tocsr()

    n = nx * ny
    eye = sp.identity(n, format="csr")
    inv_ezz = sp.diags(1.0 / ezz)
    dxx = sp.diags(exx)
    dyy = sp.diags(eyy)

    q = sp.bmat([
        [-ux @ inv_ezz @ vy, eye + ux @ inv_ezz @ vx],
        [-(eye + uy @ inv_ezz @ vy), uy @ inv_ezz @ vx],
    ], format="csr")
    r = sp.bmat([
        [vx @ uy, -(dyy + vx @ ux)],
        [dxx + vy @ uy, -vy @ ux],
    ], format="csr")
    a = (q @ r).tocsc()

    vals, vecs = spla.eigs(a, k=k_modes, sigma=sigma_guess, which="LM")
    vals = np.real(vals)
    vals = vals[(vals > 1.0) & (vals < sigma_guess)]
    if len(vals) == 0:
        raise RuntimeError("FD solver found no guided eigenvalue")
    return float(np.sqrt(np.max(vals)))
