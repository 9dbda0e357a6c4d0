"""Render the four figure kinds from their CSV inputs.

Schemas (one header row, comma separated):

- catalog:    z,x,sigma
- fit curve:  z,mu
- boundaries: tau,segment_id,<param1>,<param2>
- coverage:   <param...>,tau,p,stderr,T
- epidemic:   t,x

Rendering is deterministic: fixed figure geometry, bundled fonts, no
timestamps in the output metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("fit_overlay", "contours", "coverage", "epidemic")

# solid lines for the network-backed estimate, dashed for histogram-backed
LINESTYLES = {"network": "-", "histogram": "--"}
_TAU_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


class SchemaError(ValueError):
    """An input CSV does not match the documented schema."""


@dataclass(frozen=True)
class PlotJob:
    kind: str
    inputs: dict
    output: Path
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown plot kind {self.kind!r}, expected one of {KINDS}")


@dataclass(frozen=True)
class RenderResult:
    path: Path
    n_series: int
    legend_labels: tuple[str, ...]


def _read_csv(path, required: tuple[str, ...], label: str):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{label} file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r} for {label}")
        rows = list(reader)
    return header, rows


def _float_col(rows, name):
    try:
        return np.array([float(r[name]) for r in rows])
    except ValueError as exc:
        raise SchemaError(f"column {name!r} has a non-numeric entry: {exc}") from exc


def _new_axes():
    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=130)
    return fig, ax


def _save(fig, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": "confsim-plot"})
    plt.close(fig)


def _render_fit_overlay(job: PlotJob) -> RenderResult:
    _, cat_rows = _read_csv(job.inputs["catalog"], ("z", "x", "sigma"), "catalog")
    _, curve_rows = _read_csv(job.inputs["curve"], ("z", "mu"), "fit curve")
    z = _float_col(cat_rows, "z")
    x = _float_col(cat_rows, "x")
    s = _float_col(cat_rows, "sigma")
    zc = _float_col(curve_rows, "z")
    mu = _float_col(curve_rows, "mu")
    fig, ax = _new_axes()
    ax.errorbar(z, x, yerr=s, fmt=".", ms=2.5, lw=0.6, alpha=0.6,
                color="#444444", label="data")
    ax.plot(zc, mu, "-", color="#d62728", lw=1.8, label="best fit")
    ax.set_xscale("log")
    ax.set_xlabel(job.style.get("xlabel", "redshift z"))
    ax.set_ylabel(job.style.get("ylabel", "distance modulus"))
    ax.legend(loc="lower right")
    _save(fig, job.output)
    return RenderResult(Path(job.output), 2, ("data", "best fit"))


def _group_boundaries(rows, p1, p2):
    families: dict = {}
    for r in rows:
        key = float(r["tau"])
        seg = int(float(r["segment_id"]))
        families.setdefault(key, {}).setdefault(seg, []).append(
            (float(r[p1]), float(r[p2]))
        )
    return families


def _render_contours(job: PlotJob) -> RenderResult:
    fig, ax = _new_axes()
    labels = []
    n_series = 0
    sources = [("network", job.inputs["boundaries"])]
    if job.inputs.get("boundaries_dashed"):
        sources.append(("histogram", job.inputs["boundaries_dashed"]))
    taus_seen: list[float] = []
    for backing, path in sources:
        header, rows = _read_csv(path, ("tau", "segment_id"), "boundaries")
        params = [c for c in header if c not in ("tau", "segment_id")]
        if len(params) != 2:
            raise SchemaError(
                f"{path}: expected exactly two parameter columns, found {params}"
            )
        p1, p2 = params
        families = _group_boundaries(rows, p1, p2)
        for tau in job.style.get("taus") or sorted(families):
            tau = float(tau)
            if tau not in taus_seen:
                taus_seen.append(tau)
            color = _TAU_COLORS[taus_seen.index(tau) % len(_TAU_COLORS)]
            segments = families.get(tau, {})
            suffix = "" if backing == "network" else " (hist)"
            label = (
                f"tau={tau:g}{suffix}" if segments else f"tau={tau:g}{suffix} (empty)"
            )
            labels.append(label)
            if not segments:
                # keep a legend entry for the empty family
                ax.plot([], [], LINESTYLES[backing], color=color, label=label)
                continue
            for k, seg in enumerate(sorted(segments)):
                pts = np.asarray(segments[seg])
                ax.plot(
                    pts[:, 0], pts[:, 1], LINESTYLES[backing], color=color,
                    lw=1.4, label=label if k == 0 else None,
                )
                n_series += 1
        ax.set_xlabel(job.style.get("xlabel", p1))
        ax.set_ylabel(job.style.get("ylabel", p2))
    best = job.style.get("best_fit")
    if best is not None:
        ax.plot([best[0]], [best[1]], "o", color="black", ms=6, label="best fit")
        labels.append("best fit")
    ax.legend(loc="best", fontsize=8)
    _save(fig, job.output)
    return RenderResult(Path(job.output), n_series, tuple(labels))


def _render_coverage(job: PlotJob) -> RenderResult:
    header, rows = _read_csv(job.inputs["coverage"], ("tau", "p", "stderr", "T"), "coverage")
    if not rows:
        raise SchemaError(f"{job.inputs['coverage']}: no coverage rows")
    taus = sorted({float(r["tau"]) for r in rows})
    fig, ax = _new_axes()
    labels = []
    n_series = 0
    # stable point index: order of first appearance per parameter point
    point_ids: dict = {}
    params = [c for c in header if c not in ("tau", "p", "stderr", "T")]
    for r in rows:
        key = tuple(r[c] for c in params)
        point_ids.setdefault(key, len(point_ids))
    for i, tau in enumerate(taus):
        sel = [r for r in rows if float(r["tau"]) == tau]
        xs = np.array([point_ids[tuple(r[c] for c in params)] for r in sel])
        ps = np.array([float(r["p"]) for r in sel])
        es = np.array([float(r["stderr"]) for r in sel])
        color = _TAU_COLORS[i % len(_TAU_COLORS)]
        label = f"tau={tau:g}"
        ax.errorbar(xs, ps, yerr=es, fmt="o", ms=3.5, lw=0.9, color=color, label=label)
        ax.axhline(tau, color=color, lw=1.0, alpha=0.65)
        labels.append(label)
        n_series += 1
    ax.set_xlabel("parameter point")
    ax.set_ylabel("coverage probability")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, job.output)
    return RenderResult(Path(job.output), n_series, tuple(labels))


def _render_epidemic(job: PlotJob) -> RenderResult:
    _, rows = _read_csv(job.inputs["data"], ("t", "x"), "epidemic data")
    t = _float_col(rows, "t")
    x = _float_col(rows, "x")
    fig, ax = _new_axes()
    ax.bar(t, x, width=0.8, color="#1f77b4", label="infected")
    ax.set_xlabel(job.style.get("xlabel", "day"))
    ax.set_ylabel(job.style.get("ylabel", "infected count"))
    ax.legend(loc="upper right")
    _save(fig, job.output)
    return RenderResult(Path(job.output), 1, ("infected",))


_RENDERERS = {
    "fit_overlay": _render_fit_overlay,
    "contours": _render_contours,
    "coverage": _render_coverage,
    "epidemic": _render_epidemic,
}


def render(job: PlotJob) -> RenderResult:
    """Render one figure; returns the output path and a series summary."""
    return _RENDERERS[job.kind](job)
