"""Periodic grids, densities, quadrature, calculus and kernels on the unit torus.

Everything lives on a uniform grid over [0, 1)^d with d in {1, 2}: grid
points x_i = i*h with h = 1/n, cell quadrature ``integral(f) = h^d * sum(f)``,
and geodesic distances (so ``diam = sqrt(d)/2``).  Densities are nonnegative
arrays with unit mass under cell quadrature; potentials, first variations and
kernel slices are plain grid functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDensity,
    DimensionUnsupported,
    GridMismatch,
    InvalidTime,
)

# Positivity floor used inside log evaluations (0*log 0 handled separately).
LOG_FLOOR = 1e-300
# Cells below this make gradient-of-log quantities meaningless.
POSITIVITY_FLOOR = 1e-12
MASS_TOL = 1e-12
KERNEL_MASS_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the unit torus.

    Attributes:
        dim: spatial dimension, 1 or 2.
        n: points per axis; a power of two, at least 8.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DimensionUnsupported(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def diameter(self) -> float:
        """Geodesic diameter of the torus, sqrt(d)/2."""
        return math.sqrt(self.dim) / 2.0

    def axis(self) -> np.ndarray:
        """Grid points along one axis, x_i = i*h."""
        return np.arange(self.n) / self.n

    def points(self):
        """Coordinate arrays, one per axis, broadcastable to ``shape``."""
        x = self.axis()
        if self.dim == 1:
            return (x,)
        return (x[:, None], x[None, :])

    def displacements(self) -> np.ndarray:
        """Signed displacements of grid points, wrapped to [-1/2, 1/2)."""
        z = self.axis()
        return (z + 0.5) % 1.0 - 0.5

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values)) * self.cell_volume


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")


@dataclass
class GridFunction:
    """Real-valued function sampled on a :class:`TorusGrid`.

    Used for potentials, first variations and kernel slices.  ``mean_zero``
    records whether the Lebesgue average has been subtracted (the gauge used
    for first variations).
    """

    grid: TorusGrid
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite entries")

    def mean(self) -> float:
        return self.grid.integrate(self.values)

    def gauged(self) -> "GridFunction":
        """Return the mean-zero representative (additive-constant gauge)."""
        return GridFunction(self.grid, self.values - self.mean(), mean_zero=True)


@dataclass
class GridDensity:
    """Nonnegative probability density under cell quadrature.

    Invariants: values >= 0 and ``sum(values) * h^d = 1`` within 1e-12.
    """

    grid: TorusGrid
    values: np.ndarray
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if np.min(self.values) < 0.0:
            raise ValueError(f"density has negative cells (min {np.min(self.values):g})")
        if self.normalize:
            self.values = self.values / self.grid.integrate(self.values)
            self.normalize = False
        mass = self.grid.integrate(self.values)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass!r} deviates from 1 beyond {MASS_TOL}")

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "GridDensity":
        return cls(grid, np.ones(grid.shape))

    @classmethod
    def unchecked(cls, grid: TorusGrid, values: np.ndarray) -> "GridDensity":
        """Wrap values without validation (hot loops; caller guarantees invariants)."""
        obj = cls.__new__(cls)
        obj.grid = grid
        obj.values = values
        obj.normalize = False
        return obj

    @classmethod
    def from_values(cls, grid: TorusGrid, values) -> "GridDensity":
        """Build a density from nonnegative samples, normalizing the mass."""
        return cls(grid, values, normalize=True)

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def min(self) -> float:
        return float(np.min(self.values))

    def max(self) -> float:
        return float(np.max(self.values))


def mean_zero(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Subtract the Lebesgue average (|Omega| = 1)."""
    return values - np.sum(values) * grid.cell_volume


def entropy(mu: GridDensity) -> float:
    """Negative differential entropy ``sum(mu*log(mu))*h^d`` with 0*log 0 = 0."""
    v = mu.values
    terms = np.where(v > 0.0, v * np.log(np.maximum(v, LOG_FLOOR)), 0.0)
    return mu.grid.integrate(terms)


def grad_centered(grid: TorusGrid, values: np.ndarray) -> list:
    """Centered periodic differences, one array per axis."""
    h = grid.h
    out = []
    for ax in range(grid.dim):
        out.append((np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2.0 * h))
    return out


def fisher_information(mu: GridDensity) -> float:
    """``sum(|grad log mu|^2 * mu) * h^d`` with centered periodic differences."""
    if mu.min() < POSITIVITY_FLOOR:
        raise DegenerateDensity(
            f"fisher_information needs cells >= {POSITIVITY_FLOOR}, min is {mu.min():g}"
        )
    logs = np.log(mu.values)
    sq = sum(g**2 for g in grad_centered(mu.grid, logs))
    return mu.grid.integrate(sq * mu.values)


def _wrapped_gaussian_axis(t: float, z: np.ndarray) -> np.ndarray:
    """1D wrapped heat kernel sum_k (2 pi t)^{-1/2} exp(-(z+k)^2/(2t)).

    The image sum is truncated at |k| <= K with K large enough that the
    omitted mass is below 1e-14.
    """
    # tail mass ~ erfc(x/sqrt(2)) for images beyond K - 1/2 = x*sqrt(t): x=8.5
    # keeps it below 1e-16 even after summing both tails.
    big = max(16.0, math.log(1e16 / math.sqrt(2.0 * math.pi * t)))
    k_max = int(math.ceil(0.5 + math.sqrt(2.0 * t * big))) + 1
    pref = 1.0 / math.sqrt(2.0 * math.pi * t)
    acc = np.zeros_like(z)
    for k in range(-k_max, k_max + 1):
        acc += np.exp(-((z + k) ** 2) / (2.0 * t))
    return pref * acc


def wrapped_heat_kernel(t: float, grid: TorusGrid) -> GridFunction:
    """Transition density of Brownian motion on the torus, as one displacement slice.

    Returns q(t, z) sampled at grid displacements; for d = 2 the kernel is the
    product of the per-axis slices.  Rows integrate to 1 under cell quadrature
    within 1e-10; violations mean t is unresolvable on this grid.
    """
    if not (t > 0.0):
        raise InvalidTime(f"kernel time must be positive, got {t}")
    z = grid.displacements()
    q1 = _wrapped_gaussian_axis(t, z)
    if grid.dim == 1:
        q = q1
    else:
        q = np.outer(q1, q1)
    mass = grid.integrate(q)
    if abs(mass - 1.0) > KERNEL_MASS_TOL:
        raise InvalidTime(
            f"heat kernel at t={t} not resolved on n={grid.n} grid (row mass {mass!r})"
        )
    return GridFunction(grid, q)


def convolve_periodic(f: GridFunction, g: GridFunction) -> GridFunction:
    """Circular convolution with cell quadrature, (f*g)(x) = sum_y f(x-y) g(y) h^d.

    Computed by FFT; exact for band-limited inputs.
    """
    _check_same_grid(f, g)
    grid = f.grid
    conv = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(g.values)).real
    return GridFunction(grid, conv * grid.cell_volume)


def convolve_values(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Array-level version of :func:`convolve_periodic` for hot paths."""
    return np.fft.ifftn(np.fft.fftn(f) * np.fft.fftn(g)).real * grid.cell_volume


def w1_circle(mu: GridDensity, nu: GridDensity) -> float:
    """1-Wasserstein distance on the circle via cumulative functions.

    W1 = min over shifts s of ``integral |F_mu - F_nu - s|``; the optimal s is
    the median of the cumulative difference.
    """
    _check_same_grid(mu, nu)
    if mu.grid.dim != 1:
        raise DimensionUnsupported("w1_circle is defined for d = 1 only")
    h = mu.grid.h
    diff = np.cumsum(mu.values - nu.values) * h
    s = np.median(diff)
    return float(np.sum(np.abs(diff - s)) * h)


# ---------------------------------------------------------------------------
# File formats: text grids and CSV export.

def save_grid_values(path, grid: TorusGrid, values: np.ndarray) -> None:
    """Write ``torus d=<d> n=<n>`` header plus row-major values, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"torus d={grid.dim} n={grid.n}\n")
        for v in np.asarray(values, dtype=float).ravel():
            fh.write(f"{v:.17g}\n")


def load_grid_values(path):
    """Read a grid file; returns (TorusGrid, values)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "torus":
            raise ValueError(f"{path}: not a torus grid file")
        d = int(header[1].split("=")[1])
        n = int(header[2].split("=")[1])
        grid = TorusGrid(d, n)
        values = np.array([float(line) for line in fh if line.strip()])
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, got {values.size}")
    return grid, values.reshape(grid.shape)


def export_density_csv(path, mu: GridDensity) -> None:
    """CSV export of a 1D density as (x, value) rows."""
    if mu.grid.dim != 1:
        raise DimensionUnsupported("CSV export is for 1D densities")
    x = mu.grid.axis()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,value\n")
        for xi, vi in zip(x, mu.values):
            fh.write(f"{xi:.17g},{vi:.17g}\n")
