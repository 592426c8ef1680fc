"""The four standard figure kinds.

profile-overlay      block_profile.csv (x, u_empirical, u_pde)
flux-curve           flux.csv (rho, f) [+ empirical flux.csv with SEs,
                     + critical_density.json for the flat-segment marker]
component-histogram  components.csv (size, count) + threshold.json
                     (K, r_inf, t0) for the path-counting bound overlay
condensation-series  condensation.csv (time, max_occupancy, slow_decile_share)

Every renderer is read-only, deterministic and idempotent; alongside the
image it writes <output>.points.json holding a sha256 checksum of the plotted
points, which is what the tests pin down.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("profile-overlay", "flux-curve", "component-histogram",
         "condensation-series")


class InputError(ValueError):
    """Malformed or missing input data."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: dict
    output: str
    labels: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown figure kind {self.kind!r}")

    @staticmethod
    def from_json(path) -> "FigureSpec":
        with open(path) as fh:
            body = json.load(fh)
        return FigureSpec(
            kind=body["kind"],
            inputs=body["inputs"],
            output=body["output"],
            labels=body.get("labels", {}),
            limits=body.get("limits", {}),
        )


def read_csv_columns(path, required: list[str]) -> dict[str, np.ndarray]:
    """Load named columns; fail fast on a missing file or column."""
    if not os.path.exists(path):
        raise InputError(f"missing input file {path!r}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path!r} has no header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path!r} lacks columns {missing}; "
                             f"found {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path!r} has no data rows")
    return {c: np.array([float(r[c]) for r in rows]) for c in required}


def _checksum(series: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(series):
        h.update(name.encode())
        h.update(np.ascontiguousarray(series[name], dtype=np.float64).tobytes())
    return h.hexdigest()


def _finalize(fig, ax, spec: FigureSpec, series: dict[str, np.ndarray]) -> dict:
    ax.set_xlabel(spec.labels.get("x", ""))
    ax.set_ylabel(spec.labels.get("y", ""))
    if "title" in spec.labels:
        ax.set_title(spec.labels["title"])
    if "x" in spec.limits:
        ax.set_xlim(*spec.limits["x"])
    if "y" in spec.limits:
        ax.set_ylim(*spec.limits["y"])
    fig.savefig(spec.output, dpi=120)
    plt.close(fig)
    record = {
        "kind": spec.kind,
        "points_sha256": _checksum(series),
        "series": {k: len(v) for k, v in series.items()},
    }
    with open(spec.output + ".points.json", "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return record


def _render_profile_overlay(spec: FigureSpec) -> dict:
    cols = read_csv_columns(spec.inputs["profile"],
                            ["x", "u_empirical", "u_pde"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(cols["x"], cols["u_pde"], "-", lw=2, label="entropy solution")
    ax.step(cols["x"], cols["u_empirical"], where="mid",
            label="empirical profile")
    ax.legend()
    return _finalize(fig, ax, spec, {
        "x": cols["x"], "u_empirical": cols["u_empirical"],
        "u_pde": cols["u_pde"],
    })


def _render_flux_curve(spec: FigureSpec) -> dict:
    cols = read_csv_columns(spec.inputs["flux"], ["rho", "f"])
    series = {"rho": cols["rho"], "f": cols["f"]}
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(cols["rho"], cols["f"], "-", lw=2, label="analytic flux")
    if "empirical" in spec.inputs:
        emp = read_csv_columns(spec.inputs["empirical"], ["rho", "f", "se"])
        ax.errorbar(emp["rho"], emp["f"], yerr=3 * emp["se"], fmt="o",
                    ms=4, capsize=3, label="empirical (3 SE)")
        series.update({"rho_emp": emp["rho"], "f_emp": emp["f"],
                       "se_emp": emp["se"]})
    if "critical" in spec.inputs:
        with open(spec.inputs["critical"]) as fh:
            rec = json.load(fh)
        rho_star = rec.get("rho_star")
        if isinstance(rho_star, (int, float)):
            ax.axvline(rho_star, ls="--", color="gray")
            ax.axhline(rec["c"], ls=":", color="gray")
            series["rho_star"] = np.array([float(rho_star), float(rec["c"])])
    ax.legend()
    return _finalize(fig, ax, spec, series)


def _render_component_histogram(spec: FigureSpec) -> dict:
    cols = read_csv_columns(spec.inputs["components"], ["size", "count"])
    with open(spec.inputs["threshold"]) as fh:
        params = json.load(fh)
    for key in ("K", "r_inf", "t0"):
        if key not in params:
            raise InputError(f"threshold record lacks {key!r}")
    sizes = cols["size"].astype(int)
    counts = cols["count"]
    total = counts.sum()
    # empirical tail P(size >= s) and the path-counting bound at s = 2n
    # (a size-2n component of a 1-d ring carries at least 2n-1 edges)
    order = np.argsort(sizes)
    sizes, counts = sizes[order], counts[order]
    tail = np.cumsum(counts[::-1])[::-1] / total
    K, r_inf, t0 = params["K"], params["r_inf"], params["t0"]
    ns = np.arange(1, max(2, int(sizes.max() // 2) + 2))
    bound = np.array([K ** (2 * n - 1) * (1 - math.exp(-2 * r_inf * t0)) ** n
                      for n in ns])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(sizes, tail, "o-", label="empirical P(size >= s)")
    ax.semilogy(2 * ns, np.minimum(bound, 1.0), "s--",
                label="path-counting bound")
    ax.legend()
    return _finalize(fig, ax, spec, {
        "size": sizes.astype(float), "tail": tail,
        "bound_s": 2.0 * ns, "bound": bound,
    })


def _render_condensation_series(spec: FigureSpec) -> dict:
    cols = read_csv_columns(spec.inputs["condensation"],
                            ["time", "max_occupancy", "slow_decile_share"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(cols["time"], cols["max_occupancy"], "-o", ms=3,
            label="max occupancy")
    ax2 = ax.twinx()
    ax2.plot(cols["time"], cols["slow_decile_share"], "-s", ms=3,
             color="tab:red", label="slowest-decile mass share")
    ax2.set_ylabel("mass share")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="upper left")
    return _finalize(fig, ax, spec, {
        "time": cols["time"],
        "max_occupancy": cols["max_occupancy"],
        "slow_decile_share": cols["slow_decile_share"],
    })


_RENDERERS = {
    "profile-overlay": _render_profile_overlay,
    "flux-curve": _render_flux_curve,
    "component-histogram": _render_component_histogram,
    "condensation-series": _render_condensation_series,
}


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns the points record written next to it."""
    return _RENDERERS[spec.kind](spec)
