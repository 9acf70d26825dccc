"""Rate fitting and report writers (CSV, hand-rolled SVG line plots)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientData, NonPositiveGap

MIN_FIT_SAMPLES = 20


@dataclass
class RateFit:
    """Least-squares decay fit of a gap trace on a post-burn-in window."""

    regime: str
    rate: float
    r_squared: float
    window: tuple
    n_points: int


def _linear_fit(x: np.ndarray, y: np.ndarray):
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def rate_fit(
    times,
    gaps,
    regime: str,
    burn_in: float = 0.0,
    window: Optional[float] = None,
    gap_floor: float = 1e-12,
    kappa: Optional[float] = None,
) -> RateFit:
    """Fit the decay of a gap trace after burn-in.

    exponential: rate = -slope of log(gap); reciprocal: slope of 1/gap;
    power: slope of gap^(-1/kappa).  Samples with gap <= gap_floor are
    excluded; fewer than 20 usable samples raises InsufficientData.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(gaps, dtype=float)
    keep = t >= burn_in
    if window is not None:
        keep &= t <= burn_in + window
    t, g = t[keep], g[keep]
    positive = g > gap_floor
    if not np.any(positive):
        raise NonPositiveGap(f"no gaps above {gap_floor:g} after burn-in {burn_in:g}")
    t, g = t[positive], g[positive]
    if t.size < MIN_FIT_SAMPLES:
        raise InsufficientData(f"need >= {MIN_FIT_SAMPLES} samples, got {t.size}")

    if regime == "exponential":
        slope, r2 = _linear_fit(t, np.log(g))
        rate = -slope
    elif regime == "reciprocal":
        slope, r2 = _linear_fit(t, 1.0 / g)
        rate = slope
    elif regime == "power":
        if kappa is None or kappa <= 0:
            raise ValueError("power regime needs kappa > 0")
        slope, r2 = _linear_fit(t, g ** (-1.0 / kappa))
        rate = slope
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return RateFit(regime=regime, rate=rate, r_squared=r2,
                   window=(float(t[0]), float(t[-1])), n_points=int(t.size))


# ---------------------------------------------------------------------------
# Writers.

def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def svg_line_plot(path, xs, series: dict, title: str = "", logy: bool = False,
                  width: int = 640, height: int = 420) -> None:
    """Minimal SVG polyline plot (no display server, no plotting dependency)."""
    margin = 56
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    xs = np.asarray(xs, dtype=float)
    plotted = {}
    for name, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        if logy:
            mask = ys > 0
            plotted[name] = (xs[mask], np.log10(ys[mask]))
        else:
            mask = np.isfinite(ys)
            plotted[name] = (xs[mask], ys[mask])
    all_x = np.concatenate([p[0] for p in plotted.values() if p[0].size])
    all_y = np.concatenate([p[1] for p in plotted.values() if p[1].size])
    if all_x.size == 0:
        all_x = np.array([0.0, 1.0])
        all_y = np.array([0.0, 1.0])
    x0, x1 = float(np.min(all_x)), float(np.max(all_x))
    y0, y1 = float(np.min(all_y)), float(np.max(all_y))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" y2="{height-margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height-margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height-margin+16}" font-size="10">{x0:.4g}</text>',
        f'<text x="{width-margin}" y="{height-margin+16}" text-anchor="end" font-size="10">{x1:.4g}</text>',
        f'<text x="{margin-4}" y="{height-margin}" text-anchor="end" font-size="10">{y0:.4g}</text>',
        f'<text x="{margin-4}" y="{margin+4}" text-anchor="end" font-size="10">'
        f'{y1:.4g}{" (log10)" if logy else ""}</text>',
    ]
    for k, (name, (px, py)) in enumerate(plotted.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(px, py))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width-margin+4}" y="{margin + 14*k}" font-size="10" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
