"""Figure rendering from benchmark CSV artifacts.

Rendering is presentation only: every plotted value is taken verbatim from
the CSV (the benchmark computes all statistics), and the arrays drawn for
each series are returned so tests can round-trip them exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .spec import FIGURE_KINDS, PlotSpec, read_table

plt.rcParams["svg.hashsalt"] = "phongfit-plots"

_AXIS_LABELS = {
    "convergence": ("iteration", "rotation error (deg)"),
    "by_angle": ("ground-truth rotation angle (deg)", "rotation error (deg)"),
    "err_time": ("rotation error (deg)", "mean fitting time (ms)"),
    "sweep": ("normal weight", "rotation error (deg)"),
}


@dataclass
class RenderResult:
    outputs: list[str]
    series_data: dict        # label -> dict of plotted arrays
    skipped: list[str]       # labels with no rows


def _select(rows, config_id):
    return [r for r in rows if r["config_id"] == config_id]


def render(spec: PlotSpec, write: bool = True) -> RenderResult:
    """Draw one figure per the spec; emits PNG and SVG next to ``spec.out``."""
    rows = read_table(spec.csv_path, FIGURE_KINDS[spec.kind])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    series_data: dict = {}
    skipped: list[str] = []

    if spec.kind == "sweep":
        x = np.array([float(r["lambda_n"]) for r in rows])
        y = np.array([float(r["mean_err_final_deg"]) for r in rows])
        order = np.argsort(x)
        ax.plot(x[order], y[order], marker="o", color="#1f77b4")
        series_data["sweep"] = {"x": x[order], "y": y[order]}
    else:
        for s in spec.series:
            mine = _select(rows, s.config_id)
            if not mine:
                warnings.warn(f"series {s.config_id!r} has no rows; skipped")
                skipped.append(s.label)
                continue
            if spec.kind == "convergence":
                mine.sort(key=lambda r: int(r["iteration"]))
                x = np.array([int(r["iteration"]) for r in mine])
                y = np.array([float(r["mean_err_deg"]) for r in mine])
                ax.plot(x, y, label=s.label, color=s.color)
                series_data[s.label] = {"x": x, "y": y}
            elif spec.kind == "by_angle":
                mine.sort(key=lambda r: float(r["bin_center_deg"]))
                x = np.array([float(r["bin_center_deg"]) for r in mine])
                y = np.array([float(r["mean_err_deg"]) for r in mine])
                e = np.array([float(r["stderr_deg"]) for r in mine])
                ax.errorbar(x, y, yerr=e, label=s.label, color=s.color,
                            capsize=2.0)
                series_data[s.label] = {"x": x, "y": y, "err": e}
            elif spec.kind == "err_time":
                mine.sort(key=lambda r: int(r["iters"]))
                x = np.array([float(r["mean_err_deg"]) for r in mine])
                y = np.array([float(r["mean_time_ms"]) for r in mine])
                ax.plot(x, y, label=s.label, color=s.color, marker="o")
                for r, px, py in zip(mine, x, y):
                    ax.annotate(r["iters"], (px, py), fontsize=7,
                                textcoords="offset points", xytext=(3, 3))
                series_data[s.label] = {"x": x, "y": y}
        if not series_data:
            from .spec import NoRowsError
            raise NoRowsError(f"{spec.csv_path} (no requested series present)")
        ax.legend(loc="upper right", fontsize=8)

    xlabel, ylabel = _AXIS_LABELS[spec.kind]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if spec.title:
        ax.set_title(spec.title)
    if spec.xlim:
        ax.set_xlim(*spec.xlim)
    if spec.ylim:
        ax.set_ylim(*spec.ylim)
    fig.tight_layout()

    outputs = []
    if write:
        for ext in ("png", "svg"):
            path = f"{spec.out}.{ext}"
            fig.savefig(path, dpi=120, metadata=_stable_metadata(ext))
            outputs.append(path)
    plt.close(fig)
    return RenderResult(outputs, series_data, skipped)


def _stable_metadata(ext: str) -> dict:
    # strip volatile fields so reruns produce identical bytes where the
    # backend allows it
    if ext == "png":
        return {"Software": "phongfit-plots"}
    return {"Date": None}
