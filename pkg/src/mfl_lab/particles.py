"""Stochastic particle simulators on the line and on the torus.

All simulators are Euler-Maruyama with counter-based noise: the normals
consumed at global step s by particle i come from a Philox stream keyed by
the ensemble seed with the step-block index as counter, so runs are bit
reproducible, independent of chunking or thread scheduling, and stable under
extending the ensemble.

Three dynamics are covered:

* ``simulate_confined_sde``: dX = (v(t, X) - X) dt + dB on the line, with a
  declared bound on |v| asserted by sampling;
* ``simulate_drift_sde``:    dY = b(t, Y) dt + dB on the line (the dynamics
  whose transition kernel the envelope of ``kernel_bounds_rd`` brackets);
* ``simulate_mfl_torus``:    dX = -grad G'[hist(X)](X) dt + sqrt(2 tau) dB on
  the torus, the interacting-particle version of the density flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import _accel
from .errors import DomainMismatch, DriftBoundViolation
from .flow import FlowTrace
from .functionals import Objective
from .grid import GridDensity, TorusGrid, convolve_values, grad_centered, wrapped_heat_kernel

TWO_PI = 2.0 * math.pi
NOISE_CHUNK = 16  # steps per Philox counter block (fixed: part of the stream layout)
INIT_BLOCK = 0  # counter block reserved for sampling initial conditions


@dataclass
class ParticleEnsemble:
    """Positions (N x d), simulation time, seed and domain tag."""

    positions: np.ndarray
    time: float
    seed: int
    domain: str  # "line" | "torus"

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2:
            raise ValueError("positions must be N x d")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.domain not in ("line", "torus"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == "torus" and (
            np.min(self.positions) < 0.0 or np.max(self.positions) >= 1.0
        ):
            raise ValueError("torus positions must be wrapped to [0, 1)")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class SineDrift:
    """Bounded drift ``v(t, x) = amplitude * sin(2 pi x)`` (per coordinate)."""

    amplitude: float

    def __call__(self, t, x):
        return self.amplitude * np.sin(TWO_PI * x)

    @property
    def bound(self) -> float:
        return abs(self.amplitude)


def philox_block(seed: int, block: int) -> np.random.Generator:
    """Generator for one counter block of the ensemble's Philox stream."""
    bit = np.random.Philox(key=np.uint64(seed), counter=[0, 0, 0, np.uint64(block)])
    return np.random.Generator(bit)


def _step_noise(seed: int, step_lo: int, step_hi: int, n: int) -> np.ndarray:
    """Standard normals for global steps [step_lo, step_hi), shape (steps, n)."""
    parts = []
    b_lo = step_lo // NOISE_CHUNK
    b_hi = (step_hi - 1) // NOISE_CHUNK
    for b in range(b_lo, b_hi + 1):
        block = philox_block(seed, 1 + b).standard_normal((NOISE_CHUNK, n))
        lo = max(step_lo, b * NOISE_CHUNK) - b * NOISE_CHUNK
        hi = min(step_hi, (b + 1) * NOISE_CHUNK) - b * NOISE_CHUNK
        parts.append(block[lo:hi])
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)


def initial_positions(x0, n: int, seed: int) -> np.ndarray:
    """Resolve an initial-law specification into an (n,) position array.

    Accepts a scalar (point mass), an array, ``("gaussian", sigma)`` or a
    callable ``f(generator, n)``; random laws draw from the reserved
    initialization block of the ensemble stream.
    """
    if isinstance(x0, (int, float)):
        return np.full(n, float(x0))
    if isinstance(x0, tuple) and len(x0) == 2 and x0[0] == "gaussian":
        return float(x0[1]) * philox_block(seed, INIT_BLOCK).standard_normal(n)
    if callable(x0):
        return np.asarray(x0(philox_block(seed, INIT_BLOCK), n), dtype=float)
    arr = np.asarray(x0, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"initial positions must have shape ({n},), got {arr.shape}")
    return arr.copy()


def _run_line_sde(
    drift: Union[SineDrift, Callable],
    m_bar: float,
    x0,
    t_end: float,
    dt: float,
    n: int,
    seed: int,
    confine: float,
    record_times=(),
):
    """Shared Euler-Maruyama driver for the line; returns (ensemble, snapshots)."""
    if dt > 1e-3 + 1e-15:
        raise ValueError(f"line simulators require dt <= 1e-3, got {dt}")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    record_steps = {}
    for t_rec in record_times:
        s = int(round(t_rec / dt))
        if abs(s * dt - t_rec) > 1e-9 or not (0 <= s <= n_steps):
            raise ValueError(f"record time {t_rec} not on the step grid")
        record_steps[s] = t_rec

    x = initial_positions(x0, n, seed)
    fast = isinstance(drift, SineDrift)
    if fast and drift.bound > m_bar * (1.0 + 1e-12):
        raise DriftBoundViolation(f"|v| <= {drift.bound} exceeds declared bound {m_bar}")

    snapshots = {}
    if 0 in record_steps:
        snapshots[record_steps[0]] = x.copy()
    step = 0
    while step < n_steps:
        stop = min(n_steps, (step // NOISE_CHUNK + 1) * NOISE_CHUNK)
        for s_rec in sorted(record_steps):
            if step < s_rec < stop:
                stop = s_rec
                break
        noise = _step_noise(seed, step, stop, n)
        if fast:
            x = _accel.em_sine_steps(x, drift.amplitude, confine, dt, noise)
        else:
            sq = math.sqrt(dt)
            for k in range(noise.shape[0]):
                v = np.asarray(drift((step + k) * dt, x), dtype=float)
                vmax = float(np.max(np.abs(v)))
                if vmax > m_bar * (1.0 + 1e-12) + 1e-15:
                    raise DriftBoundViolation(
                        f"sampled |v| = {vmax} exceeds declared bound {m_bar}"
                    )
                x = x + (v - confine * x) * dt + sq * noise[k]
        step = stop
        if step in record_steps:
            snapshots[record_steps[step]] = x.copy()

    ens = ParticleEnsemble(positions=x[:, None], time=t_end, seed=seed, domain="line")
    return ens, snapshots


def simulate_confined_sde(v, m_bar, x0, t_end, dt, n, seed, record_times=()):
    """``dX = (v(t, X) - X) dt + dB`` on the line; deterministic in the seed."""
    return _run_line_sde(v, m_bar, x0, t_end, dt, n, seed, confine=1.0,
                         record_times=record_times)


def simulate_drift_sde(b, m_bar, x0, t_end, dt, n, seed, record_times=()):
    """``dY = b(t, Y) dt + dB`` on the line (pure bounded drift, no confinement)."""
    return _run_line_sde(b, m_bar, x0, t_end, dt, n, seed, confine=0.0,
                         record_times=record_times)


def histogram_density(ens: ParticleEnsemble, grid: TorusGrid) -> GridDensity:
    """Cell counts / (N h^d); mass is exactly one."""
    if ens.domain != "torus":
        raise DomainMismatch("histogram_density needs a torus ensemble")
    if ens.dim != grid.dim:
        raise DomainMismatch(f"ensemble dim {ens.dim} != grid dim {grid.dim}")
    n = grid.n
    idx = np.minimum((ens.positions * n).astype(np.int64), n - 1)
    if grid.dim == 1:
        counts = np.bincount(idx[:, 0], minlength=n).astype(float)
    else:
        flat = idx[:, 0] * n + idx[:, 1]
        counts = np.bincount(flat, minlength=n * n).astype(float).reshape(n, n)
    return GridDensity(grid, counts / (ens.n * grid.cell_volume))


def heat_multiplier(grid: TorusGrid, t: float) -> np.ndarray:
    """Fourier multiplier exp(-2 pi^2 |k|^2 t) of the heat semigroup at time t.

    Used for sub-cell smoothing bandwidths where the sampled spatial kernel
    would be aliased; preserves mass exactly (the k = 0 factor is one).
    """
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    if grid.dim == 1:
        ksq = k**2
    else:
        ksq = k[:, None] ** 2 + k[None, :] ** 2
    return np.exp(-2.0 * math.pi**2 * ksq * t)


def _smoothed_histogram(positions, grid: TorusGrid, multiplier) -> GridDensity:
    ens = ParticleEnsemble(positions=positions, time=0.0, seed=0, domain="torus")
    raw = histogram_density(ens, grid)
    smooth = np.fft.ifftn(np.fft.fftn(raw.values) * multiplier).real
    return GridDensity(grid, np.maximum(smooth, 0.0), normalize=True)


def simulate_mfl_torus(
    obj: Objective,
    grid: TorusGrid,
    n: int,
    dt: float,
    t_end: float,
    seed: int,
    x0: Optional[np.ndarray] = None,
    record_every: Optional[float] = None,
    f_reference: Optional[float] = None,
):
    """Interacting-particle dynamics whose mean-field limit is the density flow.

    Particles follow ``dX = -grad G'[mu_hat](X) dt + sqrt(2 tau) dB`` with
    mu_hat the nearest-grid-point histogram smoothed by one heat-kernel pass
    at bandwidth h.  Returns (ensemble, empirical FlowTrace).
    """
    if x0 is None:
        pos = philox_block(seed, INIT_BLOCK).random((n, grid.dim))
    else:
        pos = np.atleast_2d(np.asarray(x0, dtype=float)) % 1.0
        if pos.shape != (n, grid.dim):
            raise ValueError(f"x0 must have shape ({n}, {grid.dim})")
        pos = pos.copy()

    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    rec_stride = None
    if record_every is not None:
        rec_stride = max(1, int(round(record_every / dt)))

    smooth_kernel = heat_multiplier(grid, grid.h**2)  # bandwidth h smoothing pass
    trace = FlowTrace(f_reference=f_reference)
    noise_scale = math.sqrt(2.0 * obj.tau * dt)

    def record(t, mu_hat):
        f = obj.value(mu_hat)
        trace.times.append(t)
        trace.f_values.append(f)
        trace.dissipations.append(np.nan)
        trace.gaps.append(f - f_reference if f_reference is not None else np.nan)
        trace.min_density.append(mu_hat.min())
        trace.max_density.append(mu_hat.max())

    for step in range(n_steps):
        mu_hat = _smoothed_histogram(pos, grid, smooth_kernel)
        if rec_stride is not None and step % rec_stride == 0:
            record(step * dt, mu_hat)
        gprime = obj.g_first_variation(mu_hat)
        grads = grad_centered(grid, gprime)
        noise = _step_noise(seed, step, step + 1, n * grid.dim)[0].reshape(n, grid.dim)
        if grid.dim == 1:
            drift = _accel.interp_periodic_1d(pos[:, 0], grads[0])
            pos[:, 0] = (pos[:, 0] - drift * dt + noise_scale * noise[:, 0]) % 1.0
        else:
            dx = _accel.interp_periodic_2d(pos, grads[0])
            dy = _accel.interp_periodic_2d(pos, grads[1])
            pos[:, 0] = (pos[:, 0] - dx * dt + noise_scale * noise[:, 0]) % 1.0
            pos[:, 1] = (pos[:, 1] - dy * dt + noise_scale * noise[:, 1]) % 1.0

    ens = ParticleEnsemble(positions=pos, time=t_end, seed=seed, domain="torus")
    mu_hat = _smoothed_histogram(pos, grid, smooth_kernel)
    if rec_stride is not None:
        record(t_end, mu_hat)
    return ens, trace


def subgaussian_check(ens: ParticleEnsemble, m0: float) -> float:
    """Empirical ``mean exp(|x|^2 / m0^2)``; values <= 2 satisfy the hypothesis.

    The exponent is clipped at 700 m0^2 to guard against overflow, so a
    divergent integrand shows up as a huge (finite) statistic.
    """
    if ens.domain != "line":
        raise DomainMismatch("subgaussian_check is for line ensembles")
    if m0 <= 0:
        raise ValueError(f"m0 must be positive, got {m0}")
    r2 = np.sum(ens.positions**2, axis=1)
    return float(np.mean(np.exp(np.minimum(r2 / m0**2, 700.0))))
