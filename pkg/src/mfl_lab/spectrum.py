"""Fourier analysis of interaction kernels and convexity-threshold certificates.

An even kernel W on the torus decomposes as ``W = W_0 + W_plus - W_minus``
where the two parts collect the positive and negative Fourier coefficients
over k != 0.  The negative mass ``sum (W_k)_-`` controls how much entropy is
needed to convexify the pairwise interaction energy: any diffusivity
``tau >= 4 * sum_{k!=0} (W_k)_-`` certifies convexity of interaction + tau *
entropy.  A coarser certificate, for first variations with gradients that are
L-Lipschitz in (measure, point), is ``tau <= L * diam^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotEven
from .grid import GridFunction, TorusGrid

EVEN_TOL = 1e-12
IMAG_TOL = 1e-10


def check_even(w: GridFunction) -> None:
    """Raise NotEven unless W(z) = W(-z) per coordinate within 1e-12."""
    v = w.values
    for ax in range(w.grid.dim):
        flipped = np.flip(v, axis=ax)
        flipped = np.roll(flipped, 1, axis=ax)  # grid point -z_i is index (n - i) mod n
        if np.max(np.abs(v - flipped)) > EVEN_TOL * max(1.0, np.max(np.abs(v))):
            raise NotEven(f"kernel not even along axis {ax}")


@dataclass
class KernelSpectrum:
    """Real Fourier coefficients of an even kernel, indexed over the grid modes.

    ``coefficients[k]`` approximates ``integral W(z) exp(-2i pi k.z) dz`` by
    grid quadrature (indices follow numpy FFT ordering, |k|_inf <= n/2).
    """

    grid: TorusGrid
    coefficients: np.ndarray

    @property
    def negative_mass(self) -> float:
        """Sum of (W_k)_- over k != 0."""
        c = self.coefficients.copy()
        c.flat[0] = 0.0  # k = 0 gives a constant energy term
        return float(np.sum(np.maximum(-c, 0.0)))

    @property
    def threshold(self) -> float:
        """Diffusivity above which interaction + tau * entropy is convex."""
        return 4.0 * self.negative_mass

    def mode_indices(self):
        """Signed mode indices along each axis, FFT ordering."""
        return [np.fft.fftfreq(self.grid.n, d=1.0 / self.grid.n).astype(int)
                for _ in range(self.grid.dim)]

    def split_kernels(self):
        """Return (W0, W_plus values, W_minus values) with W = W0 + W+ - W-."""
        c = self.coefficients
        zero = float(c.flat[0])
        pos = np.maximum(c, 0.0).astype(complex)
        neg = np.maximum(-c, 0.0).astype(complex)
        pos.flat[0] = 0.0
        neg.flat[0] = 0.0
        scale = self.grid.size  # inverse of the h^d quadrature factor
        w_plus = np.fft.ifftn(pos).real * scale
        w_minus = np.fft.ifftn(neg).real * scale
        return zero, w_plus, w_minus

    def reconstruct(self) -> np.ndarray:
        """Inverse transform; reproduces the kernel samples within 1e-10."""
        return np.fft.ifftn(self.coefficients.astype(complex)).real * self.grid.size


def kernel_spectrum(w: GridFunction) -> KernelSpectrum:
    """Fourier coefficients of an even kernel by grid quadrature."""
    check_even(w)
    grid = w.grid
    coeff = np.fft.fftn(w.values) * grid.cell_volume
    scale = max(1.0, float(np.max(np.abs(coeff))))
    if np.max(np.abs(coeff.imag)) > IMAG_TOL * scale:
        raise NotEven("spectrum has non-negligible imaginary part")
    return KernelSpectrum(grid, coeff.real.copy())


def interaction_tau_threshold(spec: KernelSpectrum) -> float:
    """4 * sum_{k!=0} (W_k)_-; any tau >= this certifies convexity."""
    return spec.threshold


def lipschitz_tau_bound(lip: float, grid: TorusGrid) -> float:
    """L * diam^2 with the geodesic diameter sqrt(d)/2."""
    if lip < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return lip * grid.diameter**2
