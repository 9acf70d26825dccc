"""Objective components over densities and their first variations.

An objective is ``F(mu) = G(mu) + tau * H(mu)`` where H is the negative
differential entropy and G is a weighted sum of components: linear potentials
``int V dmu``, pairwise interactions ``int int W(y-x) dmu dmu``, smoothed
log-likelihood fit terms ``-int log(mu * q_sigma) drho_hat``, entropy itself,
and the self-transport regularizer from :mod:`mfl_lab.eot`.

First variations are returned in the mean-zero gauge (they are only defined
up to an additive constant, and a fixed gauge keeps tests deterministic).
The composite first variation is ``F'[mu] = G'[mu] + tau * log(mu)``; the
proximal Gibbs map ``mu -> normalize(exp(-G'[mu]/tau))`` has the minimizers
of F as fixed points and powers the damped fixed-point minimizer used as the
reference for every suboptimality gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import eot
from .errors import (
    DegenerateDensity,
    GridMismatch,
    InvalidSigma,
    InvalidTau,
    NoConvergence,
)
from .grid import (
    POSITIVITY_FLOOR,
    GridDensity,
    GridFunction,
    TorusGrid,
    convolve_values,
    entropy,
    grad_centered,
    mean_zero,
    wrapped_heat_kernel,
)
from .spectrum import check_even

KINDS = ("potential", "interaction", "fit", "entropy", "self-transport", "sum")


def _require_positive(mu: GridDensity, who: str) -> None:
    if mu.min() < POSITIVITY_FLOOR:
        raise DegenerateDensity(f"{who} needs cells >= {POSITIVITY_FLOOR}, min is {mu.min():g}")


def potential_value_and_fv(v: GridFunction, mu: GridDensity):
    """Linear term: value ``int V dmu``, first variation V (mean-zero gauge)."""
    if v.grid != mu.grid:
        raise GridMismatch("potential and density on different grids")
    value = mu.grid.integrate(v.values * mu.values)
    return value, GridFunction(mu.grid, mean_zero(mu.grid, v.values), mean_zero=True)


def interaction_value_and_fv(w: GridFunction, mu: GridDensity):
    """Pairwise interaction energy of an even kernel via one periodic convolution.

    value = ``int int W(y-x) dmu(x) dmu(y)``; first variation ``2 (W * mu)``.
    """
    if w.grid != mu.grid:
        raise GridMismatch("kernel and density on different grids")
    check_even(w)
    wmu = convolve_values(mu.grid, w.values, mu.values)
    value = mu.grid.integrate(wmu * mu.values)
    return value, GridFunction(mu.grid, mean_zero(mu.grid, 2.0 * wmu), mean_zero=True)


def fit_value_and_fv(rho_hat: GridDensity, sigma: float, mu: GridDensity):
    """Smoothed log-likelihood data-fitting term.

    value = ``-int log(mu * q_sigma) drho_hat`` and first variation
    ``-q_sigma * (rho_hat / (mu * q_sigma))``, mean-zero gauge.
    """
    if sigma <= 0:
        raise InvalidSigma(f"fit bandwidth must be positive, got {sigma}")
    if rho_hat.grid != mu.grid:
        raise GridMismatch("observation and density on different grids")
    grid = mu.grid
    q = wrapped_heat_kernel(sigma, grid).values
    smoothed = convolve_values(grid, q, mu.values)
    value = -grid.integrate(rho_hat.values * np.log(smoothed))
    fv = -convolve_values(grid, q, rho_hat.values / smoothed)
    return value, GridFunction(grid, mean_zero(grid, fv), mean_zero=True)


class Functional:
    """One objective component, tagged by kind, with a scalar weight."""

    def __init__(self, kind: str, weight: float = 1.0, **params):
        if kind not in KINDS:
            raise ValueError(f"unknown functional kind {kind!r}")
        self.kind = kind
        self.weight = float(weight)
        self.params = params
        if kind == "fit":
            # precompute the smoothing kernel once per component
            sigma = params["sigma"]
            if sigma <= 0:
                raise InvalidSigma(f"fit bandwidth must be positive, got {sigma}")
        if kind == "interaction":
            check_even(params["w"])

    # -- constructors -------------------------------------------------------
    @classmethod
    def potential(cls, v: GridFunction, weight: float = 1.0) -> "Functional":
        return cls("potential", weight=weight, v=v)

    @classmethod
    def interaction(cls, w: GridFunction, weight: float = 1.0) -> "Functional":
        return cls("interaction", weight=weight, w=w)

    @classmethod
    def fit(cls, rho_hat: GridDensity, sigma: float, weight: float = 1.0) -> "Functional":
        return cls("fit", weight=weight, rho_hat=rho_hat, sigma=sigma)

    @classmethod
    def entropy(cls, weight: float = 1.0) -> "Functional":
        return cls("entropy", weight=weight)

    @classmethod
    def self_transport(cls, tau: float, weight: float = 1.0, tol: float = 1e-9,
                       max_iter: int = 10000) -> "Functional":
        if tau <= 0:
            raise InvalidTau(f"self-transport strength must be positive, got {tau}")
        return cls("self-transport", weight=weight, tau=tau, tol=tol, max_iter=max_iter)

    @classmethod
    def sum_of(cls, components) -> "Functional":
        return cls("sum", weight=1.0, components=list(components))

    # -- evaluation ---------------------------------------------------------
    def value_and_fv(self, mu: GridDensity, warm=None):
        """Return (value, mean-zero fv values, warm-start state)."""
        grid = mu.grid
        if self.kind == "potential":
            val, fv = potential_value_and_fv(self.params["v"], mu)
            return self.weight * val, self.weight * fv.values, None
        if self.kind == "interaction":
            val, fv = interaction_value_and_fv(self.params["w"], mu)
            return self.weight * val, self.weight * fv.values, None
        if self.kind == "fit":
            val, fv = fit_value_and_fv(self.params["rho_hat"], self.params["sigma"], mu)
            return self.weight * val, self.weight * fv.values, None
        if self.kind == "entropy":
            _require_positive(mu, "entropy first variation")
            val = entropy(mu)
            fv = mean_zero(grid, np.log(mu.values))
            return self.weight * val, self.weight * fv, None
        if self.kind == "self-transport":
            val, fv, phi = eot.self_transport_fv(
                mu, self.params["tau"], tol=self.params["tol"],
                max_iter=self.params["max_iter"], warm=warm,
            )
            return self.weight * val, self.weight * fv.values, phi
        # sum
        total = 0.0
        fv_total = np.zeros(grid.shape)
        warm = warm if warm is not None else [None] * len(self.params["components"])
        warm_out = []
        for comp, w0 in zip(self.params["components"], warm):
            v, f, s = comp.value_and_fv(mu, warm=w0)
            total += v
            fv_total += f
            warm_out.append(s)
        return self.weight * total, self.weight * fv_total, warm_out

    def value(self, mu: GridDensity) -> float:
        return self.value_and_fv(mu)[0]

    def first_variation(self, mu: GridDensity, warm=None) -> GridFunction:
        _, fv, _ = self.value_and_fv(mu, warm=warm)
        return GridFunction(mu.grid, fv, mean_zero=True)


@dataclass
class Objective:
    """``F = sum(components) + tau * H`` with diffusivity tau."""

    components: list
    tau: float
    warm: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.tau < 0:
            raise InvalidTau(f"diffusivity must be nonnegative, got {self.tau}")
        if self.warm is None:
            self.warm = [None] * len(self.components)

    def g_value_and_fv(self, mu: GridDensity):
        """Value and mean-zero first variation of the non-entropy part G."""
        total = 0.0
        fv = np.zeros(mu.grid.shape)
        warm_out = []
        for comp, w0 in zip(self.components, self.warm):
            v, f, s = comp.value_and_fv(mu, warm=w0)
            total += v
            fv += f
            warm_out.append(s)
        self.warm = warm_out
        return total, fv

    def g_first_variation(self, mu: GridDensity) -> np.ndarray:
        return self.g_value_and_fv(mu)[1]

    def value(self, mu: GridDensity) -> float:
        g, _ = self.g_value_and_fv(mu)
        return g + self.tau * entropy(mu)

    def first_variation(self, mu: GridDensity) -> GridFunction:
        return objective_first_variation(self, mu)

    def grad_norm_sq(self, mu: GridDensity) -> float:
        """``int |grad F'[mu]|^2 dmu`` with centered differences (the dissipation)."""
        fv = objective_first_variation(self, mu).values
        sq = sum(g**2 for g in grad_centered(mu.grid, fv))
        return mu.grid.integrate(sq * mu.values)


def objective_first_variation(obj: Objective, mu: GridDensity) -> GridFunction:
    """``F'[mu] = G'[mu] + tau*log(mu)``, mean-zero gauge."""
    _require_positive(mu, "objective first variation")
    _, gfv = obj.g_value_and_fv(mu)
    fv = gfv + obj.tau * np.log(mu.values)
    return GridFunction(mu.grid, mean_zero(mu.grid, fv), mean_zero=True)


def proximal_gibbs(obj: Objective, mu: GridDensity) -> GridDensity:
    """``nu ~ exp(-G'[mu]/tau)``, normalized on the grid.

    Overflow is guarded by subtracting the max exponent before exponentiating.
    """
    if obj.tau <= 0:
        raise InvalidTau("proximal Gibbs map needs tau > 0")
    _, gfv = obj.g_value_and_fv(mu)
    expo = -gfv / obj.tau
    vals = np.exp(expo - np.max(expo))
    return GridDensity.from_values(mu.grid, vals)


def minimize_fixed_point(
    obj: Objective,
    mu0: Optional[GridDensity] = None,
    grid: Optional[TorusGrid] = None,
    tol: float = 1e-11,
    max_iter: int = 5000,
    damping: float = 0.5,
):
    """Damped proximal-Gibbs iteration ``mu <- (1-theta) mu + theta prox(mu)``.

    Intended for convex objectives (certify via the spectrum module).  On
    success returns ``(mu_star, F(mu_star))`` with the gradient residual
    ``sqrt(int |grad F'[mu*]|^2 dmu*) <= tol``; this value is the reference
    for all suboptimality gaps.  Oscillations trigger a geometric back-off of
    the damping factor.
    """
    if mu0 is None:
        if grid is None:
            raise ValueError("pass mu0 or grid")
        mu0 = GridDensity.uniform(grid)
    mu = mu0
    theta = damping
    best = np.inf
    worse_streak = 0
    for it in range(1, max_iter + 1):
        nu = proximal_gibbs(obj, mu)
        vals = (1.0 - theta) * mu.values + theta * nu.values
        mu = GridDensity.from_values(mu.grid, vals)
        res = np.sqrt(obj.grad_norm_sq(mu))
        if res <= tol:
            return mu, obj.value(mu)
        if res > best:
            worse_streak += 1
            if worse_streak >= 2:
                theta = max(theta * 0.5, 1.0 / 64.0)
                worse_streak = 0
        else:
            best = res
            worse_streak = 0
    raise NoConvergence(
        f"fixed-point minimizer: residual {res:.3e} > tol {tol:.1e} after {max_iter} iterations",
        iterations=max_iter,
        residual=res,
    )
