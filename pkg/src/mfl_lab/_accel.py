"""Hot numeric kernels: numba-compiled with pure-numpy fallbacks.

The numpy implementations are always defined (suffix ``_numpy``) and are the
reference; when numba is importable and the environment variable
``MFLLAB_NUMBA`` is not set to ``0``, the public names point at ``@njit``
versions compiled from identical loops.  ``benchmarks/bench_kernels.py``
times both paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("MFLLAB_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in {"0", "false", "no", "off"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and NUMBA_REQUESTED

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Finite-volume step: upwind advection + centered diffusion, flux form.
# dg is the face gradient of the advected potential: dg[i] = (g[i+1]-g[i])/h
# (face between cells i and i+1, periodic), advection velocity a = -dg.

def fv_step_1d_numpy(mu, dg, tau, dt, h):
    a = -dg
    mu_right = np.roll(mu, -1)
    upwind = np.where(a > 0.0, mu, mu_right)
    flux = a * upwind - tau * (mu_right - mu) / h
    return mu - (dt / h) * (flux - np.roll(flux, 1))


def fv_step_2d_numpy(mu, dgx, dgy, tau, dt, h):
    ax = -dgx
    ay = -dgy
    mu_xr = np.roll(mu, -1, axis=0)
    mu_yr = np.roll(mu, -1, axis=1)
    flux_x = ax * np.where(ax > 0.0, mu, mu_xr) - tau * (mu_xr - mu) / h
    flux_y = ay * np.where(ay > 0.0, mu, mu_yr) - tau * (mu_yr - mu) / h
    div = (flux_x - np.roll(flux_x, 1, axis=0)) + (flux_y - np.roll(flux_y, 1, axis=1))
    return mu - (dt / h) * div


# ---------------------------------------------------------------------------
# Euler-Maruyama advance for drift a*sin(2 pi x) - c*x over a chunk of steps.
# noise holds standard normals, one row per step; positions update in place.

def em_sine_steps_numpy(x, amp, confine, dt, noise):
    sq = math.sqrt(dt)
    for s in range(noise.shape[0]):
        x += (amp * np.sin(TWO_PI * x) - confine * x) * dt + sq * noise[s]
    return x


# Linear interpolation of a periodic table at positions in [0, 1).

def interp_periodic_1d_numpy(pos, table):
    n = table.shape[0]
    u = (pos % 1.0) * n
    i = u.astype(np.int64) % n
    f = u - np.floor(u)
    return table[i] * (1.0 - f) + table[(i + 1) % n] * f


def interp_periodic_2d_numpy(pos, table):
    n = table.shape[0]
    u = (pos[:, 0] % 1.0) * n
    v = (pos[:, 1] % 1.0) * n
    i = u.astype(np.int64) % n
    j = v.astype(np.int64) % n
    fu = u - np.floor(u)
    fv = v - np.floor(v)
    i1 = (i + 1) % n
    j1 = (j + 1) % n
    return (
        table[i, j] * (1 - fu) * (1 - fv)
        + table[i1, j] * fu * (1 - fv)
        + table[i, j1] * (1 - fu) * fv
        + table[i1, j1] * fu * fv
    )


if USE_NUMBA:

    @njit(cache=True)
    def fv_step_1d(mu, dg, tau, dt, h):  # pragma: no cover - compiled
        n = mu.shape[0]
        flux = np.empty(n)
        for i in range(n):
            a = -dg[i]
            right = mu[(i + 1) % n]
            up = mu[i] if a > 0.0 else right
            flux[i] = a * up - tau * (right - mu[i]) / h
        out = np.empty(n)
        for i in range(n):
            out[i] = mu[i] - (dt / h) * (flux[i] - flux[i - 1])
        return out

    @njit(cache=True)
    def fv_step_2d(mu, dgx, dgy, tau, dt, h):  # pragma: no cover - compiled
        n = mu.shape[0]
        flux_x = np.empty((n, n))
        flux_y = np.empty((n, n))
        for i in range(n):
            i1 = (i + 1) % n
            for j in range(n):
                j1 = (j + 1) % n
                ax = -dgx[i, j]
                up = mu[i, j] if ax > 0.0 else mu[i1, j]
                flux_x[i, j] = ax * up - tau * (mu[i1, j] - mu[i, j]) / h
                ay = -dgy[i, j]
                up = mu[i, j] if ay > 0.0 else mu[i, j1]
                flux_y[i, j] = ay * up - tau * (mu[i, j1] - mu[i, j]) / h
        out = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = mu[i, j] - (dt / h) * (
                    flux_x[i, j] - flux_x[i - 1, j] + flux_y[i, j] - flux_y[i, j - 1]
                )
        return out

    @njit(cache=True)
    def em_sine_steps(x, amp, confine, dt, noise):  # pragma: no cover - compiled
        steps, n = noise.shape
        sq = math.sqrt(dt)
        for s in range(steps):
            for i in range(n):
                x[i] += (amp * math.sin(TWO_PI * x[i]) - confine * x[i]) * dt + sq * noise[s, i]
        return x

    @njit(cache=True)
    def interp_periodic_1d(pos, table):  # pragma: no cover - compiled
        n = table.shape[0]
        out = np.empty(pos.shape[0])
        for k in range(pos.shape[0]):
            u = (pos[k] % 1.0) * n
            i = int(u) % n
            f = u - math.floor(u)
            out[k] = table[i] * (1.0 - f) + table[(i + 1) % n] * f
        return out

    @njit(cache=True)
    def interp_periodic_2d(pos, table):  # pragma: no cover - compiled
        n = table.shape[0]
        out = np.empty(pos.shape[0])
        for k in range(pos.shape[0]):
            u = (pos[k, 0] % 1.0) * n
            v = (pos[k, 1] % 1.0) * n
            i = int(u) % n
            j = int(v) % n
            fu = u - math.floor(u)
            fv = v - math.floor(v)
            i1 = (i + 1) % n
            j1 = (j + 1) % n
            out[k] = (
                table[i, j] * (1 - fu) * (1 - fv)
                + table[i1, j] * fu * (1 - fv)
                + table[i, j1] * (1 - fu) * fv
                + table[i1, j1] * fu * fv
            )
        return out

else:
    fv_step_1d = fv_step_1d_numpy
    fv_step_2d = fv_step_2d_numpy
    em_sine_steps = em_sine_steps_numpy
    interp_periodic_1d = interp_periodic_1d_numpy
    interp_periodic_2d = interp_periodic_2d_numpy
