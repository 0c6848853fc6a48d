"""Compiled Yee/CPML update loops.

Field arrays all have shape (nx+1, ny+1, nz+1). Index n along an axis is a
ghost that is never written and stays zero; E updates reach the ghost through
index -1. Derivative coefficient arrays already contain 1/(kappa*dx) (and dt
for H), and are zero along degenerate (single-cell) axes.

Each cell is written by exactly one loop iteration, so results do not depend
on the number of worker threads.
"""

from __future__ import annotations

import os

import numba
from numba import njit, prange

# TBB on many systems is too old for numba and only produces a warning; OpenMP
# is always shipped with the wheels.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


@njit(parallel=True, cache=True)
def update_h(ex, ey, ez, hx, hy, hz, dhx, dhy, dhz):
    nx = hx.shape[0] - 1
    ny = hx.shape[1] - 1
    nz = hx.shape[2] - 1
    for i in prange(nx):
        cx = dhx[i]
        for j in range(ny):
            cy = dhy[j]
            for k in range(nz):
                cz = dhz[k]
                e_x = ex[i, j, k]
                e_y = ey[i, j, k]
                e_z = ez[i, j, k]
                hx[i, j, k] -= (ez[i, j + 1, k] - e_z) * cy - (ey[i, j, k + 1] - e_y) * cz
                hy[i, j, k] -= (ex[i, j, k + 1] - e_x) * cz - (ez[i + 1, j, k] - e_z) * cx
                hz[i, j, k] -= (ey[i + 1, j, k] - e_y) * cx - (ex[i, j + 1, k] - e_x) * cy


@njit(parallel=True, cache=True)
def update_e(ex, ey, ez, hx, hy, hz, cax, cay, caz, dex, dey, dez):
    nx = ex.shape[0] - 1
    ny = ex.shape[1] - 1
    nz = ex.shape[2] - 1
    for i in prange(nx):
        cx = dex[i]
        for j in range(ny):
            cy = dey[j]
            for k in range(nz):
                cz = dez[k]
                h_x = hx[i, j, k]
                h_y = hy[i, j, k]
                h_z = hz[i, j, k]
                ex[i, j, k] += cax[i, j, k] * ((h_z - hz[i, j - 1, k]) * cy - (h_y - hy[i, j, k - 1]) * cz)
                ey[i, j, k] += cay[i, j, k] * ((h_x - hx[i, j, k - 1]) * cz - (h_z - hz[i - 1, j, k]) * cx)
                ez[i, j, k] += caz[i, j, k] * ((h_y - hy[i - 1, j, k]) * cx - (h_x - hx[i, j - 1, k]) * cy)


# CPML corrections. The absorbing layers along an axis of n cells are the
# global indices [0, npl) and [n - npl, n); slab-local layer p runs over both
# (0..npl-1 low, npl..2npl-1 high). b/c are the recursive-convolution
# coefficients by global index (c already divided by the cell size).

@njit(parallel=True, cache=True)
def cpml_h_x(ey, ez, hy, hz, psi_y, psi_z, npl, b, c, dt):
    nx = hy.shape[0] - 1
    ny = hy.shape[1] - 1
    nz = hy.shape[2] - 1
    for j in prange(ny):
        for p in range(2 * npl):
            i = p if p < npl else nx - 2 * npl + p
            bi = b[i]
            ci = c[i]
            for k in range(nz):
                py = bi * psi_y[p, j, k] + ci * (ez[i + 1, j, k] - ez[i, j, k])
                pz = bi * psi_z[p, j, k] + ci * (ey[i + 1, j, k] - ey[i, j, k])
                psi_y[p, j, k] = py
                psi_z[p, j, k] = pz
                hy[i, j, k] += dt * py
                hz[i, j, k] -= dt * pz


@njit(parallel=True, cache=True)
def cpml_h_y(ex, ez, hx, hz, psi_x, psi_z, npl, b, c, dt):
    nx = hx.shape[0] - 1
    ny = hx.shape[1] - 1
    nz = hx.shape[2] - 1
    for i in prange(nx):
        for p in range(2 * npl):
            j = p if p < npl else ny - 2 * npl + p
            bj = b[j]
            cj = c[j]
            for k in range(nz):
                px = bj * psi_x[i, p, k] + cj * (ez[i, j + 1, k] - ez[i, j, k])
                pz = bj * psi_z[i, p, k] + cj * (ex[i, j + 1, k] - ex[i, j, k])
                psi_x[i, p, k] = px
                psi_z[i, p, k] = pz
                hx[i, j, k] -= dt * px
                hz[i, j, k] += dt * pz


@njit(parallel=True, cache=True)
def cpml_h_z(ex, ey, hx, hy, psi_x, psi_y, npl, b, c, dt):
    nx = hx.shape[0] - 1
    ny = hx.shape[1] - 1
    nz = hx.shape[2] - 1
    for i in prange(nx):
        for j in range(ny):
            for side in range(2):
                k0 = 0 if side == 0 else nz - npl
                p0 = side * npl
                for q in range(npl):
                    k = k0 + q
                    p = p0 + q
                    px = b[k] * psi_x[i, j, p] + c[k] * (ey[i, j, k + 1] - ey[i, j, k])
                    py = b[k] * psi_y[i, j, p] + c[k] * (ex[i, j, k + 1] - ex[i, j, k])
                    psi_x[i, j, p] = px
                    psi_y[i, j, p] = py
                    hx[i, j, k] += dt * px
                    hy[i, j, k] -= dt * py


@njit(parallel=True, cache=True)
def cpml_e_x(hy, hz, ey, ez, cay, caz, psi_y, psi_z, npl, b, c):
    nx = ey.shape[0] - 1
    ny = ey.shape[1] - 1
    nz = ey.shape[2] - 1
    for j in prange(ny):
        for p in range(2 * npl):
            i = p if p < npl else nx - 2 * npl + p
            bi = b[i]
            ci = c[i]
            for k in range(nz):
                py = bi * psi_y[p, j, k] + ci * (hz[i, j, k] - hz[i - 1, j, k])
                pz = bi * psi_z[p, j, k] + ci * (hy[i, j, k] - hy[i - 1, j, k])
                psi_y[p, j, k] = py
                psi_z[p, j, k] = pz
                ey[i, j, k] -= cay[i, j, k] * py
                ez[i, j, k] += caz[i, j, k] * pz


@njit(parallel=True, cache=True)
def cpml_e_y(hx, hz, ex, ez, cax, caz, psi_x, psi_z, npl, b, c):
    nx = ex.shape[0] - 1
    ny = ex.shape[1] - 1
    nz = ex.shape[2] - 1
    for i in prange(nx):
        for p in range(2 * npl):
            j = p if p < npl else ny - 2 * npl + p
            bj = b[j]
            cj = c[j]
            for k in range(nz):
                px = bj * psi_x[i, p, k] + cj * (hz[i, j, k] - hz[i, j - 1, k])
                pz = bj * psi_z[i, p, k] + cj * (hx[i, j, k] - hx[i, j - 1, k])
                psi_x[i, p, k] = px
                psi_z[i, p, k] = pz
                ex[i, j, k] += cax[i, j, k] * px
                ez[i, j, k] -= caz[i, j, k] * pz


@njit(parallel=True, cache=True)
def cpml_e_z(hx, hy, ex, ey, cax, cay, psi_x, psi_y, npl, b, c):
    nx = ex.shape[0] - 1
    ny = ex.shape[1] - 1
    nz = ex.shape[2] - 1
    for i in prange(nx):
        for j in range(ny):
            for side in range(2):
                k0 = 0 if side == 0 else nz - npl
                p0 = side * npl
                for q in range(npl):
                    k = k0 + q
                    p = p0 + q
                    px = b[k] * psi_x[i, j, p] + c[k] * (hy[i, j, k] - hy[i, j, k - 1])
                    py = b[k] * psi_y[i, j, p] + c[k] * (hx[i, j, k] - hx[i, j, k - 1])
                    psi_x[i, j, p] = px
                    psi_y[i, j, p] = py
                    ex[i, j, k] -= cax[i, j, k] * px
                    ey[i, j, k] += cay[i, j, k] * py


@njit(cache=True)
def dft_accumulate(acc, a, b, phase):
    """acc[f] += phase[f] * (a + b) / 2 for every in-plane point."""
    nf = acc.shape[0]
    n1 = acc.shape[1]
    n2 = acc.shape[2]
    for i in range(n1):
        for j in range(n2):
            v = 0.5 * (a[i, j] + b[i, j])
            for f in range(nf):
                acc[f, i, j] += phase[f] * v


@njit(parallel=True, cache=True)
def energy_sums(ex, ey, ez, cax, cay, caz, hx, hy, hz, gx, gy, gz, lo, hi):
    """Sum of E.eps.E (via eps = 1/ca up to dt) and H.G over an index box."""
    se = 0.0
    sh = 0.0
    for i in prange(lo[0], hi[0]):
        for j in range(lo[1], hi[1]):
            for k in range(lo[2], hi[2]):
                se += ex[i, j, k] ** 2 / cax[i, j, k] + ey[i, j, k] ** 2 / cay[i, j, k] + ez[i, j, k] ** 2 / caz[i, j, k]
                sh += hx[i, j, k] * gx[i, j, k] + hy[i, j, k] * gy[i, j, k] + hz[i, j, k] * gz[i, j, k]
    return se, sh
