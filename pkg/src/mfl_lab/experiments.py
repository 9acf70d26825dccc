"""Configuration-driven experiment pipelines.

Each ``run_*`` function consumes a plain config dict (the parsed TOML), runs
one pipeline, writes CSV traces plus a manifest echoing every input, asserts
the experiment's invariants (raising AssertionFailure with the violated
invariant named), and returns a summary dict.  Every number in a report
traces to a config field, a bounds-module evaluator, or a measured trace.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy import stats

from . import bounds as tb
from . import eot, flow, reporting, spectrum, trajectory
from .errors import AssertionFailure, ConfigError
from .functionals import Functional, Objective, minimize_fixed_point
from .grid import (
    GridDensity,
    GridFunction,
    TorusGrid,
    entropy,
    load_grid_values,
    save_grid_values,
    wrapped_heat_kernel,
)
from .particles import (
    SineDrift,
    histogram_density,
    philox_block,
    simulate_confined_sde,
    simulate_drift_sde,
    simulate_mfl_torus,
    subgaussian_check,
)

VERSION = "0.1.0"
TWO_PI = 2.0 * math.pi


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def grid_from_config(cfg: dict) -> TorusGrid:
    g = _require(cfg, "grid")
    return TorusGrid(int(g.get("d", 1)), int(_require(g, "n")))


def potential_from_config(grid: TorusGrid, cfg: dict) -> GridFunction:
    if "file" in cfg:
        fgrid, values = load_grid_values(cfg["file"])
        if fgrid != grid:
            raise ConfigError(f"potential file grid {fgrid} != experiment grid {grid}")
        return GridFunction(grid, values)
    name = _require(cfg, "name")
    amp = float(cfg.get("amplitude", 1.0))
    pts = grid.points()
    if name == "cos":
        values = amp * sum(np.cos(TWO_PI * x) for x in pts)
    elif name == "sin":
        values = amp * sum(np.sin(TWO_PI * x) for x in pts)
    else:
        raise ConfigError(f"unknown potential {name!r}")
    return GridFunction(grid, np.broadcast_to(values, grid.shape).copy())


def kernel_from_config(grid: TorusGrid, cfg: dict) -> GridFunction:
    if "file" in cfg:
        fgrid, values = load_grid_values(cfg["file"])
        if fgrid != grid:
            raise ConfigError(f"kernel file grid {fgrid} != experiment grid {grid}")
        return GridFunction(grid, values)
    name = _require(cfg, "name")
    z = grid.displacements()
    zs = (z,) if grid.dim == 1 else (z[:, None], z[None, :])
    if name == "neg_cos":
        kappa = float(cfg.get("kappa", 1.0))
        values = -kappa * sum(np.cos(TWO_PI * zz) for zz in zs)
    elif name == "cos":
        kappa = float(cfg.get("kappa", 1.0))
        values = kappa * sum(np.cos(TWO_PI * zz) for zz in zs)
    elif name == "heat":
        values = wrapped_heat_kernel(float(_require(cfg, "t")), grid).values
        values = float(cfg.get("scale", 1.0)) * values
    else:
        raise ConfigError(f"unknown kernel {name!r}")
    return GridFunction(grid, np.broadcast_to(values, grid.shape).copy())


def density_from_config(grid: TorusGrid, cfg: dict) -> GridDensity:
    kind = _require(cfg, "kind")
    if kind == "uniform":
        return GridDensity.uniform(grid)
    if kind == "cosine":
        amp = float(cfg.get("amplitude", 0.5))
        pts = grid.points()
        values = 1.0 + amp / grid.dim * sum(np.cos(TWO_PI * x) for x in pts)
        return GridDensity.from_values(grid, np.broadcast_to(values, grid.shape).copy())
    if kind == "heat_slice":
        q = wrapped_heat_kernel(float(_require(cfg, "t")), grid)
        return GridDensity.from_values(grid, q.values)
    if kind == "file":
        fgrid, values = load_grid_values(_require(cfg, "path"))
        if fgrid != grid:
            raise ConfigError(f"density file grid {fgrid} != experiment grid {grid}")
        return GridDensity.from_values(grid, values)
    raise ConfigError(f"unknown density kind {kind!r}")


def objective_from_config(grid: TorusGrid, cfg: dict) -> Objective:
    tau = float(_require(cfg, "tau"))
    comps = []
    for c in cfg.get("components", []):
        kind = _require(c, "kind")
        weight = float(c.get("weight", 1.0))
        if kind == "potential":
            comps.append(Functional.potential(potential_from_config(grid, c), weight=weight))
        elif kind == "interaction":
            comps.append(Functional.interaction(kernel_from_config(grid, c), weight=weight))
        elif kind == "fit":
            obs = density_from_config(grid, c["observation"])
            comps.append(Functional.fit(obs, float(_require(c, "sigma")), weight=weight))
        elif kind == "self_transport":
            comps.append(Functional.self_transport(float(_require(c, "tau")), weight=weight))
        elif kind == "entropy":
            comps.append(Functional.entropy(weight=weight))
        else:
            raise ConfigError(f"unknown component kind {kind!r}")
    return Objective(comps, tau)


def interaction_convexity_threshold(obj: Objective, grid: TorusGrid) -> float:
    """Fourier convexity threshold of the summed interaction kernels.

    Non-interaction components (linear potentials, fit terms) are convex and
    contribute nothing; the bound is an upper bound on the critical
    diffusivity of the whole objective.
    """
    total = np.zeros(grid.shape)
    found = False
    for comp in obj.components:
        if comp.kind == "interaction":
            total = total + comp.weight * comp.params["w"].values
            found = True
    if not found:
        return 0.0
    return spectrum.kernel_spectrum(GridFunction(grid, total)).threshold


def _outdir(outdir):
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _finish(outdir, cfg, summary, emit_svg=False, svg=None):
    reporting.write_manifest(
        os.path.join(outdir, "manifest.json"),
        {"config": cfg, "version": VERSION, "summary": summary},
    )
    if emit_svg and svg is not None:
        svg()
    return summary


# ---------------------------------------------------------------------------
# flow


def run_flow_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    obj = objective_from_config(grid, _require(cfg, "objective"))
    mu0 = density_from_config(grid, _require(cfg, "initial"))
    fc = cfg.get("flow", {})
    config = flow.FlowConfig(
        dt_safety=float(fc.get("dt_safety", 0.4)),
        t_end=float(_require(fc, "t_end")),
        record_every=float(fc.get("record_every", 0.01)),
        energy_slack=float(fc.get("energy_slack", 1e-8)),
        snapshot_every=fc.get("snapshot_every"),
    )
    ref_cfg = cfg.get("reference", {})
    minimizer = None
    f_star = None
    if ref_cfg.get("enabled", False):
        minimizer, f_star = minimize_fixed_point(
            obj, grid=grid, tol=float(ref_cfg.get("tol", 1e-11)),
            max_iter=int(ref_cfg.get("max_iter", 5000)),
        )
    trace = flow.run_flow(mu0, obj, config, minimizer_ref=f_star)
    trace.to_csv(os.path.join(outdir, "trace.csv"))
    for k, (t, values) in enumerate(trace.snapshots):
        save_grid_values(os.path.join(outdir, f"snapshot_{k:04d}.grid"), grid, values)

    f_vals = np.array(trace.f_values)
    if np.any(np.diff(f_vals) > config.energy_slack * (1.0 + np.abs(f_vals[:-1]))):
        raise AssertionFailure("objective not monotone nonincreasing along the flow")
    summary = {
        "f_initial": trace.f_values[0],
        "f_final": trace.f_values[-1],
        "f_reference": f_star,
        "final_gap": trace.gaps[-1] if f_star is not None else None,
        "max_mass_drift": trace.max_mass_drift,
        "energy_defect": trace.energy_defect,
        "measured_lipschitz": trace.measured_lipschitz,
        "records": len(trace.times),
    }
    if f_star is not None and abs(trace.f_values[-1] - f_star) > 1e-6:
        flow_gap = abs(trace.f_values[-1] - f_star)
        summary["flow_vs_fixed_point"] = flow_gap

    def svg():
        reporting.svg_line_plot(
            os.path.join(outdir, "trace.svg"), trace.times,
            {"F": trace.f_values}, title="objective along the flow",
        )

    return _finish(outdir, cfg, summary, emit_svg, svg)


# ---------------------------------------------------------------------------
# rates


def run_rates_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    obj = objective_from_config(grid, _require(cfg, "objective"))
    mu0 = density_from_config(grid, _require(cfg, "initial"))
    regime = _require(cfg, "regime")
    fc = cfg.get("flow", {})
    config = flow.FlowConfig(
        dt_safety=float(fc.get("dt_safety", 0.4)),
        t_end=float(_require(fc, "t_end")),
        record_every=float(fc.get("record_every", 0.002)),
        energy_slack=float(fc.get("energy_slack", 1e-8)),
    )
    minimizer, f_star = minimize_fixed_point(obj, grid=grid, tol=1e-11)
    trace = flow.run_flow(mu0, obj, config, minimizer_ref=f_star)
    trace.to_csv(os.path.join(outdir, "trace.csv"))

    if abs(trace.f_values[-1] - f_star) > 1e-6:
        raise AssertionFailure(
            f"flow limit and fixed-point reference disagree by "
            f"{abs(trace.f_values[-1] - f_star):.3e} (> 1e-6)"
        )

    tau_c = interaction_convexity_threshold(obj, grid)
    tau = obj.tau
    if regime == "reciprocal":
        if abs(tau - tau_c) > 1e-9:
            raise ConfigError(
                f"reciprocal regime needs tau at the convexity threshold "
                f"({tau_c!r}), got {tau!r}"
            )
        tau_c = tau
    lip = trace.measured_lipschitz
    m, big_m, t0 = tb.torus_density_envelope(lip, tau, grid.dim)
    cert = tb.compact_rates(m, big_m, tau, tau_c, grid.dim, burn_in=t0)

    fit = reporting.rate_fit(
        trace.times, trace.gaps, regime,
        burn_in=t0,
        window=cfg.get("fit_window"),
        gap_floor=float(cfg.get("gap_floor", 1e-11)),
    )
    summary = {
        "regime": regime,
        "tau": tau,
        "tau_c_bound": tau_c,
        "measured_lipschitz": lip,
        "envelope_m": m,
        "envelope_M": big_m,
        "burn_in": t0,
        "certificate_rate": cert.rate,
        "certificate_constants": cert.constants,
        "fitted_rate": fit.rate,
        "r_squared": fit.r_squared,
        "fit_window": fit.window,
        "fit_points": fit.n_points,
    }
    reporting.write_csv(
        os.path.join(outdir, "rate_fit.csv"),
        ["regime", "tau", "tau_c_bound", "burn_in", "certificate_rate",
         "fitted_rate", "r_squared", "n_points"],
        [[regime, tau, tau_c, t0, cert.rate, fit.rate, fit.r_squared, fit.n_points]],
    )

    if regime == "exponential":
        frac = float(cfg.get("min_rate_fraction", 0.9))
        if fit.rate < frac * cert.rate:
            raise AssertionFailure(
                f"measured rate {fit.rate:.4g} < {frac} x certificate {cert.rate:.4g}"
            )
    else:
        if fit.rate < cert.rate:
            raise AssertionFailure(
                f"reciprocal slope {fit.rate:.4g} below certificate {cert.rate:.4g}"
            )
        min_r2 = float(cfg.get("min_r_squared", 0.98))
        if fit.r_squared < min_r2:
            raise AssertionFailure(f"reciprocal fit R^2 {fit.r_squared:.4f} < {min_r2}")

    def svg():
        reporting.svg_line_plot(
            os.path.join(outdir, "gap.svg"), trace.times,
            {"gap": trace.gaps}, title="suboptimality gap", logy=True,
        )

    return _finish(outdir, cfg, summary, emit_svg, svg)


# ---------------------------------------------------------------------------
# afi


def run_afi_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    mu = density_from_config(grid, _require(cfg, "density"))
    taus = [float(t) for t in _require(cfg, "taus")]
    slack = float(cfg.get("slack", 1e-8))
    rows = []
    ratios = []
    for tau in taus:
        s = eot.afi_sandwich(mu, tau, slack=slack)
        rows.append([tau, s.mid, s.upper, s.ratio])
        ratios.append(s.ratio)
    reporting.write_csv(
        os.path.join(outdir, "afi.csv"),
        ["tau", "D_tau_plus_tauH", "upper_bound", "ratio"], rows,
    )
    order = np.argsort(taus)[::-1]  # decreasing tau
    sorted_ratios = [ratios[i] for i in order]
    if any(b < a - 1e-12 for a, b in zip(sorted_ratios, sorted_ratios[1:])):
        raise AssertionFailure(f"sandwich ratio not nondecreasing as tau decreases: {sorted_ratios}")
    min_final = cfg.get("min_final_ratio")
    if min_final is not None and sorted_ratios[-1] < float(min_final):
        raise AssertionFailure(
            f"final ratio {sorted_ratios[-1]:.4f} < required {min_final}"
        )
    summary = {"taus": taus, "ratios": ratios, "rows": rows}

    def svg():
        reporting.svg_line_plot(
            os.path.join(outdir, "afi.svg"), taus,
            {"ratio": ratios}, title="sandwich ratio vs tau",
        )

    return _finish(outdir, cfg, summary, emit_svg, svg)


# ---------------------------------------------------------------------------
# kernel-check


def wilson_halfwidth(count: int, n: int, z: float = 1.0) -> float:
    """Half-width of the Wilson score interval for a binomial proportion."""
    phat = count / n
    denom = 1.0 + z * z / n
    return z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom


def _bucket_probability(env, t, start, lo, hi, n_quad=33):
    xs = np.linspace(lo, hi, n_quad)
    low = np.array([env.lower(t, start, x) for x in xs])
    up = np.array([env.upper(t, start, x) for x in xs])
    return float(np.trapezoid(low, xs)), float(np.trapezoid(up, xs))


def run_kernel_check(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    """Empirical transition densities against the drift-bounded kernel envelope."""
    _outdir(outdir)
    seed = int(cfg.get("seed", 0))
    n = int(cfg.get("n_particles", 200000))
    dt = float(cfg.get("dt", 1e-3))
    times = [float(t) for t in cfg.get("times", [0.1, 0.25, 0.5])]
    start = float(cfg.get("start", 0.0))
    width = float(cfg.get("bucket_width", 0.1))
    half = float(cfg.get("bucket_halfwidth", 4.0))
    z_inflate = float(cfg.get("wilson_inflation", 3.0))
    rows = []
    passed = 0
    total = 0
    for k, m_bar in enumerate([float(m) for m in _require(cfg, "m_bars")]):
        env = tb.kernel_bounds_rd(m_bar, d=1)
        _, snaps = simulate_drift_sde(
            SineDrift(m_bar), m_bar, start, max(times), dt, n, seed + k,
            record_times=times,
        )
        edges = np.arange(start - half, start + half + width / 2, width)
        for t in times:
            x = snaps[t]
            counts, _ = np.histogram(x, bins=edges)
            for b in range(len(edges) - 1):
                lo, hi = edges[b], edges[b + 1]
                p_lo, p_hi = _bucket_probability(env, t, start, lo, hi)
                count = int(counts[b])
                phat = count / n
                w = wilson_halfwidth(count, n)
                ok = (phat >= p_lo - z_inflate * w) and (phat <= p_hi + z_inflate * w)
                passed += ok
                total += 1
                rows.append([m_bar, t, lo, hi, count, phat, p_lo, p_hi, w, ok])
    reporting.write_csv(
        os.path.join(outdir, "kernel_check.csv"),
        ["m_bar", "t", "x_lo", "x_hi", "count", "p_hat", "p_lower", "p_upper",
         "wilson_halfwidth", "pass"],
        rows,
    )
    frac = passed / total
    min_frac = float(cfg.get("min_pass_fraction", 0.99))
    if frac < min_frac:
        raise AssertionFailure(f"bucket pass fraction {frac:.4f} < {min_frac}")
    summary = {"buckets": total, "passed": passed, "pass_fraction": frac}
    return _finish(outdir, cfg, summary, emit_svg)


# ---------------------------------------------------------------------------
# sandwich


def run_sandwich_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    """Quadratic-exponent check of the Gaussian envelope for the confined flow."""
    _outdir(outdir)
    seed = int(cfg.get("seed", 0))
    eps = float(cfg.get("eps", 0.2))
    m_star = float(cfg.get("m_star", 2.0))
    m_bound = float(cfg.get("m_bound", 1.01))
    amp = float(cfg.get("drift_amplitude", 0.3))
    sigma0 = float(cfg.get("start_sigma", 0.5))
    n = int(cfg.get("n_particles", 200000))
    dt = float(cfg.get("dt", 1e-3))
    params = tb.gaussian_sandwich_params(eps, m_star, m_bound)
    t_rec = round(params.t_eps / dt) * dt

    drift = SineDrift(amp)
    if drift.bound > m_bound:
        raise ConfigError("drift amplitude exceeds declared bound")
    ens0_vals = sigma0 * philox_block(seed, 0).standard_normal(n)
    from .particles import ParticleEnsemble

    sub = subgaussian_check(
        ParticleEnsemble(ens0_vals[:, None], 0.0, seed, "line"), m_star
    )
    if sub > 2.0:
        raise AssertionFailure(f"initial law is not {m_star}-subgaussian: {sub:.3f} > 2")

    _, snaps = simulate_confined_sde(
        drift, m_bound, ens0_vals, t_rec, dt, n, seed, record_times=[t_rec]
    )
    x = snaps[t_rec]
    width = float(cfg.get("bucket_width", 0.1))
    fit_range = float(cfg.get("fit_range", 2.5))
    min_count = int(cfg.get("min_count", 25))
    edges = np.arange(-fit_range, fit_range + width / 2, width)
    counts, _ = np.histogram(x, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    keep = counts >= min_count
    y = -np.log(counts[keep] / (n * width))
    c = centers[keep]
    wts = counts[keep].astype(float)
    design = np.stack([c**2, c, np.ones_like(c)], axis=1)
    sw = np.sqrt(wts)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    pred = design @ coef
    mean_w = np.sum(wts * y) / np.sum(wts)
    ss_res = float(np.sum(wts * (y - pred) ** 2))
    ss_tot = float(np.sum(wts * (y - mean_w) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    quad = float(coef[0])

    reporting.write_csv(
        os.path.join(outdir, "sandwich_fit.csv"),
        ["x", "count", "neg_log_density", "fit"],
        [[ci, int(wi), yi, pi] for ci, wi, yi, pi in zip(c, wts, y, pred)],
    )
    lo, hi = params.exponent_upper, params.exponent_lower
    if not (lo <= quad <= hi):
        raise AssertionFailure(
            f"fitted quadratic coefficient {quad:.4f} outside [{lo}, {hi}]"
        )
    min_r2 = float(cfg.get("min_r_squared", 0.99))
    if r2 < min_r2:
        raise AssertionFailure(f"quadratic fit R^2 {r2:.4f} < {min_r2}")
    summary = {
        "t_eps": params.t_eps,
        "record_time": t_rec,
        "quadratic_coefficient": quad,
        "exponent_window": [lo, hi],
        "r_squared": r2,
        "fitted_log_constant": float(coef[2]),
        "subgaussian_statistic": sub,
        "buckets_used": int(np.sum(keep)),
    }

    def svg():
        reporting.svg_line_plot(
            os.path.join(outdir, "sandwich.svg"), c,
            {"-log density": y, "fit": pred}, title="negative log density vs x",
        )

    return _finish(outdir, cfg, summary, emit_svg, svg)


# ---------------------------------------------------------------------------
# mfl-particles


def run_mfl_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    obj = objective_from_config(grid, _require(cfg, "objective"))
    seed = int(cfg.get("seed", 0))
    n = int(cfg.get("n_particles", 100000))
    dt = float(cfg.get("dt", 1e-3))
    t_end = float(_require(cfg, "t_end"))
    minimizer, f_star = minimize_fixed_point(obj, grid=grid, tol=1e-10)
    ens, trace = simulate_mfl_torus(
        obj, grid, n, dt, t_end, seed,
        record_every=float(cfg.get("record_every", 0.1)), f_reference=f_star,
    )
    trace.to_csv(os.path.join(outdir, "empirical_trace.csv"))
    hist = histogram_density(ens, grid)
    summary = {"f_reference": f_star, "final_f": trace.f_values[-1]}

    if not obj.components:
        # pure diffusion: the stationary law is uniform; chi-square band check
        counts = hist.values * ens.n * grid.cell_volume
        expected = ens.n / grid.size
        stat = float(np.sum((counts - expected) ** 2 / expected))
        level = float(cfg.get("chi_square_level", 0.99))
        band = (
            stats.chi2.ppf((1 - level) / 2, grid.size - 1),
            stats.chi2.ppf(1 - (1 - level) / 2, grid.size - 1),
        )
        if not (band[0] <= stat <= band[1]):
            raise AssertionFailure(
                f"chi-square statistic {stat:.1f} outside {level:.0%} band {band}"
            )
        summary.update({"chi_square": stat, "band": list(band)})
    else:
        from .grid import w1_circle

        w1 = w1_circle(hist, minimizer)
        w1_bound = float(cfg.get("w1_const", 3.0)) / math.sqrt(n)
        if w1 > w1_bound:
            raise AssertionFailure(f"W1(histogram, fixed point) {w1:.2e} > {w1_bound:.2e}")
        summary.update({"w1_to_fixed_point": w1, "w1_bound": w1_bound})
    return _finish(outdir, cfg, summary, emit_svg)


# ---------------------------------------------------------------------------
# traj


def run_traj_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    seed = int(cfg.get("seed", 0))
    t_count = int(cfg.get("T", 4))
    tau = float(_require(cfg, "tau"))
    potential = potential_from_config(grid, _require(cfg, "potential"))
    problem = trajectory.generate_synthetic(
        potential,
        float(cfg.get("tau_true", tau)),
        t_count,
        int(cfg.get("n_samples", 10000)),
        float(_require(cfg, "sigma")),
        seed,
        tau=tau,
    )
    trajectory.save_problem(os.path.join(outdir, "problem.traj"), problem)
    fc = cfg.get("flow", {})
    config = flow.FlowConfig(
        dt_safety=float(fc.get("dt_safety", 0.4)),
        t_end=float(_require(fc, "t_end")),
        record_every=float(fc.get("record_every", 0.002)),
        energy_slack=float(fc.get("energy_slack", 1e-8)),
    )
    min_r2 = float(cfg.get("min_r_squared", 0.95))
    identity_tol = float(cfg.get("entropy_identity_tol", 1e-10))
    summary = {}
    traces = {}
    for variant in ("standard", "debiased"):
        problem.variant = variant
        objective = trajectory.build_objective(problem, sinkhorn_tol=1e-10)
        ref_chain, ref_value = trajectory.chain_fixed_point(
            objective, tol=float(cfg.get("reference_tol", 1e-9))
        )
        trace = trajectory.coupled_flow(
            problem, trajectory.MarginalChain.uniform(grid, t_count + 1), config,
            reference=ref_value, sinkhorn_tol=1e-10, record_variant_split=True,
        )
        trace.to_csv(os.path.join(outdir, f"trace_{variant}.csv"))
        for i, mu in enumerate(ref_chain.densities):
            save_grid_values(
                os.path.join(outdir, f"marginal_{variant}_{i}.grid"), grid, mu.values
            )
        regime = "exponential" if variant == "standard" else "reciprocal"
        fit = reporting.rate_fit(
            trace.times, trace.gaps, regime,
            burn_in=float(cfg.get("burn_in", 0.0)),
            window=cfg.get("fit_window"),
            gap_floor=float(cfg.get("gap_floor", 1e-10)),
        )
        if fit.r_squared < min_r2:
            raise AssertionFailure(
                f"{variant} variant {regime} fit R^2 {fit.r_squared:.4f} < {min_r2}"
            )
        # both variants' values differ by exactly the endpoint-entropy term
        # on every chain recorded along the flow
        worst = 0.0
        for v_std, v_deb, h_first, h_last in trace.variant_split:
            worst = max(
                worst,
                abs((v_deb - v_std) + 0.5 * problem.tau * (h_first + h_last)),
            )
        if worst > identity_tol:
            raise AssertionFailure(
                f"endpoint-entropy identity defect {worst:.2e} > {identity_tol}"
            )
        traces[variant] = trace
        summary[variant] = {
            "reference_value": ref_value,
            "fitted_rate": fit.rate,
            "r_squared": fit.r_squared,
            "regime": regime,
            "final_gap": trace.gaps[-1],
            "entropy_identity_defect": worst,
            "measured_lipschitz": trace.measured_lipschitz,
        }

    def svg():
        std = traces["standard"]
        reporting.svg_line_plot(
            os.path.join(outdir, "traj_gaps.svg"), std.times,
            {"standard": std.gaps, "debiased": traces["debiased"].gaps},
            title="chain gap traces", logy=True,
        )

    return _finish(outdir, cfg, summary, emit_svg, svg)


# ---------------------------------------------------------------------------
# spectrum / bounds


def run_spectrum_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    grid = grid_from_config(cfg)
    w = kernel_from_config(grid, _require(cfg, "kernel"))
    spec = spectrum.kernel_spectrum(w)
    idx = spec.mode_indices()
    if grid.dim == 1:
        rows = [[int(k), float(c)] for k, c in zip(idx[0], spec.coefficients)]
        header = ["k", "W_k"]
    else:
        rows = [
            [int(k1), int(k2), float(spec.coefficients[i, j])]
            for i, k1 in enumerate(idx[0])
            for j, k2 in enumerate(idx[1])
        ]
        header = ["k1", "k2", "W_k"]
    path = os.path.join(outdir, "spectrum.csv")
    reporting.write_csv(path, header, rows)
    summary = {
        "threshold": spec.threshold,
        "negative_mass": spec.negative_mass,
        "csv": path,
    }
    return _finish(outdir, cfg, summary, emit_svg)


BOUND_EVALUATORS = {
    "kernel_bounds_td": lambda p: dict(zip(
        ("t_star", "lower_const", "upper_const"),
        tb.kernel_bounds_td(p["m_bar"], int(p["d"])),
    )),
    "torus_density_envelope": lambda p: dict(zip(
        ("m", "M", "t0"),
        tb.torus_density_envelope(p["lip"], p["tau"], int(p["d"])),
    )),
    "compact_rates": lambda p: _cert_dict(tb.compact_rates(
        p["m"], p["M"], p["tau"], p["tau_c"], int(p["d"]),
        burn_in=p.get("burn_in", 0.0))),
    "variance_change_constant": lambda p: {
        "C": tb.variance_change_constant(p["sigma1"], p["sigma2"], p["p"], int(p["d"]))},
    "poly_constant": lambda p: {
        "C": tb.poly_constant(p["sigma1"], p["sigma2"], int(p["d"]))},
    "gaussian_sandwich_params": lambda p: {
        "T_eps": tb.gaussian_sandwich_params(p["eps"], p["m_star"], p["m"]).t_eps,
        "exponent_lower": 1.0 + p["eps"],
        "exponent_upper": 1.0 - p["eps"],
    },
    "noncompact_burn_in": lambda p: {
        "t0": tb.noncompact_burn_in(p["alpha"], p["m0"], p["tau"], p.get("kappa"))},
}


def _cert_dict(cert: tb.RateCertificate) -> dict:
    return {"regime": cert.regime, "rate": cert.rate, "burn_in": cert.burn_in,
            **{f"const_{k}": v for k, v in cert.constants.items()}}


def run_bounds_experiment(cfg: dict, outdir: str, emit_svg: bool = False) -> dict:
    _outdir(outdir)
    name = _require(cfg, "evaluator")
    if name not in BOUND_EVALUATORS:
        raise ConfigError(f"unknown evaluator {name!r}; choose from {sorted(BOUND_EVALUATORS)}")
    try:
        result = BOUND_EVALUATORS[name](cfg.get("params", {}))
    except KeyError as exc:
        raise ConfigError(f"evaluator {name!r} missing parameter {exc}") from exc
    lines = [f"{k}={reporting._fmt(v)}" for k, v in result.items()
             if not isinstance(v, dict)]
    with open(os.path.join(outdir, "bounds.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return _finish(outdir, cfg, {"evaluator": name, "values": result, "lines": lines},
                   emit_svg)


RUNNERS = {
    "flow": run_flow_experiment,
    "rates": run_rates_experiment,
    "afi": run_afi_experiment,
    "kernel-check": run_kernel_check,
    "sandwich": run_sandwich_experiment,
    "mfl-particles": run_mfl_experiment,
    "traj": run_traj_experiment,
    "spectrum": run_spectrum_experiment,
    "bounds": run_bounds_experiment,
}
