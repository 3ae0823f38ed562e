"""
Compiled kernels for the flux-form operator L u = div(gamma grad u).

Fields live on cell centres with a zero ghost layer outside the grid. Face
coefficients are stored per axis with one extra entry along that axis:
``kx[i]`` couples cell ``i - 1`` and cell ``i``. Every kernel splits the first
axis across threads and writes each output cell from exactly one iteration,
so results do not depend on the thread count.
"""

import logging

import numba as nb
import numpy as np

logger = logging.getLogger(__name__)

_numba_setting = {"nogil": True, "cache": True}


@nb.njit(parallel=True, **_numba_setting)
def flux_divergence(u, kx, ky, kz, scale, out):
    """out = scale * (L u) with L the unscaled 7-point flux stencil (h**2 folded into ``scale``)."""
    nx, ny, nz = u.shape
    for i in nb.prange(nx):
        for j in range(ny):
            for k in range(nz):
                c = u[i, j, k]
                xm = u[i - 1, j, k] if i > 0 else 0.0
                xp = u[i + 1, j, k] if i < nx - 1 else 0.0
                ym = u[i, j - 1, k] if j > 0 else 0.0
                yp = u[i, j + 1, k] if j < ny - 1 else 0.0
                zm = u[i, j, k - 1] if k > 0 else 0.0
                zp = u[i, j, k + 1] if k < nz - 1 else 0.0
                acc = kx[i + 1, j, k] * (xp - c) - kx[i, j, k] * (c - xm)
                acc += ky[i, j + 1, k] * (yp - c) - ky[i, j, k] * (c - ym)
                acc += kz[i, j, k + 1] * (zp - c) - kz[i, j, k] * (c - zm)
                out[i, j, k] = scale * acc


@nb.njit(parallel=True, **_numba_setting)
def leapfrog_step(u_prev, u_curr, kx, ky, kz, courant_sq, out):
    """out = 2 u_curr - u_prev + (dt/h)**2 * (L u_curr)."""
    nx, ny, nz = u_curr.shape
    for i in nb.prange(nx):
        for j in range(ny):
            for k in range(nz):
                c = u_curr[i, j, k]
                xm = u_curr[i - 1, j, k] if i > 0 else 0.0
                xp = u_curr[i + 1, j, k] if i < nx - 1 else 0.0
                ym = u_curr[i, j - 1, k] if j > 0 else 0.0
                yp = u_curr[i, j + 1, k] if j < ny - 1 else 0.0
                zm = u_curr[i, j, k - 1] if k > 0 else 0.0
                zp = u_curr[i, j, k + 1] if k < nz - 1 else 0.0
                acc = kx[i + 1, j, k] * (xp - c) - kx[i, j, k] * (c - xm)
                acc += ky[i, j + 1, k] * (yp - c) - ky[i, j, k] * (c - ym)
                acc += kz[i, j, k + 1] * (zp - c) - kz[i, j, k] * (c - zm)
                out[i, j, k] = 2.0 * c - u_prev[i, j, k] + courant_sq * acc


@nb.njit(parallel=True, **_numba_setting)
def shifted_operator(u, kx, ky, kz, inv_h2, shift, out):
    """out = shift * u - L u, the SPD operator of the resolvent equation."""
    nx, ny, nz = u.shape
    for i in nb.prange(nx):
        for j in range(ny):
            for k in range(nz):
                c = u[i, j, k]
                xm = u[i - 1, j, k] if i > 0 else 0.0
                xp = u[i + 1, j, k] if i < nx - 1 else 0.0
                ym = u[i, j - 1, k] if j > 0 else 0.0
                yp = u[i, j + 1, k] if j < ny - 1 else 0.0
                zm = u[i, j, k - 1] if k > 0 else 0.0
                zp = u[i, j, k + 1] if k < nz - 1 else 0.0
                acc = kx[i + 1, j, k] * (xp - c) - kx[i, j, k] * (c - xm)
                acc += ky[i, j + 1, k] * (yp - c) - ky[i, j, k] * (c - ym)
                acc += kz[i, j, k + 1] * (zp - c) - kz[i, j, k] * (c - zm)
                out[i, j, k] = shift * c - inv_h2 * acc


@nb.njit(parallel=True, **_numba_setting)
def yukawa_field(targets, sources, strengths, tau, values, grads):
    """Sum of strengths * exp(-tau r) / (4 pi r) over sources, with its gradient in the target."""
    inv4pi = 1.0 / (4.0 * np.pi)
    n = targets.shape[0]
    m = sources.shape[0]
    for i in nb.prange(n):
        v = 0.0
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for j in range(m):
            dx = targets[i, 0] - sources[j, 0]
            dy = targets[i, 1] - sources[j, 1]
            dz = targets[i, 2] - sources[j, 2]
            r = np.sqrt(dx * dx + dy * dy + dz * dz)
            e = strengths[j] * np.exp(-tau * r) / r
            v += e
            c = -(tau + 1.0 / r) * e / r
            gx += c * dx
            gy += c * dy
            gz += c * dz
        values[i] = v * inv4pi
        grads[i, 0] = gx * inv4pi
        grads[i, 1] = gy * inv4pi
        grads[i, 2] = gz * inv4pi


def set_thread_cap(threads: int) -> int:
    """Cap numba workers; 0 leaves the default. Returns the active count."""
    if threads > 0:
        nb.set_num_threads(min(threads, nb.config.NUMBA_NUM_THREADS))
        logger.debug("numba threads capped at %d", nb.get_num_threads())
    return nb.get_num_threads()
