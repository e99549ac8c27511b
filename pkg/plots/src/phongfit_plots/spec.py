"""Plot specifications: which CSV, which figure kind, which series."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

# figure kind -> columns the input CSV must provide
FIGURE_KINDS = {
    "convergence": ("config_id", "iteration", "mean_err_deg"),
    "by_angle": ("config_id", "bin_center_deg", "mean_err_deg", "stderr_deg"),
    "err_time": ("config_id", "iters", "mean_err_deg", "mean_time_ms"),
    "sweep": ("lambda_n", "mean_err_final_deg"),
}


class PlotSpecError(Exception):
    """Spec document rejected; the message names the offending field."""


class MissingColumnError(Exception):
    def __init__(self, column: str, path: str):
        self.column = column
        self.path = path
        super().__init__(f"column '{column}' missing from {path}")


class NoRowsError(Exception):
    def __init__(self, path: str):
        super().__init__(f"no rows in {path}")


@dataclass
class SeriesSpec:
    config_id: str
    label: str
    color: str | None = None


@dataclass
class PlotSpec:
    kind: str
    csv_path: str
    out: str                 # output basename; .png and .svg are appended
    series: list[SeriesSpec] = field(default_factory=list)
    title: str | None = None
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise PlotSpecError(
                f"kind: expected one of {sorted(FIGURE_KINDS)}, got {self.kind!r}")
        if self.kind != "sweep" and not self.series:
            raise PlotSpecError(f"series: at least one series required for {self.kind}")


def load_plot_spec(path) -> PlotSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlotSpecError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_plot_spec(doc)


def parse_plot_spec(doc: dict) -> PlotSpec:
    if not isinstance(doc, dict):
        raise PlotSpecError("plot spec must be a JSON object")
    for key in ("kind", "csv", "out"):
        if key not in doc:
            raise PlotSpecError(f"{key}: missing")
    series = []
    for i, sd in enumerate(doc.get("series", [])):
        if "config_id" not in sd:
            raise PlotSpecError(f"series[{i}].config_id: missing")
        series.append(SeriesSpec(
            config_id=str(sd["config_id"]),
            label=str(sd.get("label", sd["config_id"])),
            color=sd.get("color"),
        ))
    lim = {}
    for name in ("xlim", "ylim"):
        if name in doc:
            pair = doc[name]
            if not (isinstance(pair, list) and len(pair) == 2):
                raise PlotSpecError(f"{name}: expected [low, high]")
            lim[name] = (float(pair[0]), float(pair[1]))
    return PlotSpec(
        kind=str(doc["kind"]),
        csv_path=str(doc["csv"]),
        out=str(doc["out"]),
        series=series,
        title=doc.get("title"),
        **lim,
    )


def read_table(path, required: tuple[str, ...]) -> list[dict]:
    """Read a CSV as dict rows, checking the required columns exist."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumnError(col, str(path))
        rows = list(reader)
    if not rows:
        raise NoRowsError(str(path))
    return rows
