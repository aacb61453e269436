"""Figure rendering for benchmark CSV tables.

Two figure kinds are supported.  "rates" draws strong and weak
discretization errors against the level on a log2 axis, one pair of
series per scheme.  "cost-mse" draws the deterministic cost against the
realized mean squared error on log-log axes, one series per scheme.
Legend labels carry least-squares slope fits computed in log space.

The figures are regenerated from the CSV files alone; nothing is
recomputed beyond the slope fits, so the tables stay the single source
of truth.  Extra columns after the required ones are ignored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("rates", "cost-mse")

RATE_COLUMNS = ("scheme", "level", "strong_err", "weak_err")
COST_COLUMNS = ("scheme", "eps2", "mse", "cost")


class SchemaError(ValueError):
    """The input CSV does not match the expected table layout."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render.

    Attributes:
        input_path: CSV table written by the benchmark experiments.
        kind: "rates" or "cost-mse"; selects layout and axis scales.
        output_path: image file to write; format follows the suffix.
        group_column: column that splits rows into series.
    """

    input_path: Path
    kind: str
    output_path: Path
    group_column: str = "scheme"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "input_path", Path(self.input_path))
        object.__setattr__(self, "output_path", Path(self.output_path))


@dataclass(frozen=True)
class RenderSummary:
    """What a render call produced, for scripting and tests.

    Attributes:
        output_path: the image file written.
        series: legend labels in drawing order.
        slopes: fitted log-space slope per legend label; nan when a
            series has too few points or non-positive values.
    """

    output_path: Path
    series: tuple
    slopes: dict = field(default_factory=dict)


def read_table(path, required, group_column="scheme"):
    """Read a CSV table, checking the required columns are present.

    Returns:
        List of row dicts (strings, as read).

    Raises:
        SchemaError: missing columns (named in the message) or no data.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a CSV header")
        needed = list(required)
        if group_column not in needed:
            needed.append(group_column)
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise SchemaError(
                f"{path}: missing columns: {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _series_keys(rows, group_column):
    keys = []
    for row in rows:
        key = row[group_column]
        if key not in keys:
            keys.append(key)
    return keys


def _fit_slope(x, y):
    """Least-squares slope of y against x, nan when underdetermined."""
    if len(x) < 2 or len(set(x)) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def _label(name, slope):
    if np.isnan(slope):
        return name
    return f"{name} (slope {slope:.2f})"


def _render_rates(spec: FigureSpec) -> RenderSummary:
    rows = read_table(spec.input_path, RATE_COLUMNS, spec.group_column)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    labels = []
    slopes = {}
    for i, key in enumerate(_series_keys(rows, spec.group_column)):
        mine = [r for r in rows if r[spec.group_column] == key]
        mine.sort(key=lambda r: float(r["level"]))
        levels = np.array([float(r["level"]) for r in mine])
        color = colors[i % len(colors)]
        for column, style in (("strong_err", "-"), ("weak_err", "--")):
            err = np.array([float(r[column]) for r in mine])
            if np.all(err > 0.0):
                slope = _fit_slope(levels, np.log2(err))
            else:
                slope = float("nan")
            name = f"{key} {column.split('_')[0]}"
            label = _label(name, slope)
            ax.plot(levels, err, style, marker="o", color=color, label=label)
            labels.append(label)
            slopes[label] = slope
    ax.set_yscale("log", base=2)
    ax.set_xlabel("level l")
    ax.set_ylabel("error")
    ax.set_title(spec.input_path.stem)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)
    return RenderSummary(output_path=spec.output_path, series=tuple(labels),
                         slopes=slopes)


def _render_cost(spec: FigureSpec) -> RenderSummary:
    rows = read_table(spec.input_path, COST_COLUMNS, spec.group_column)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    labels = []
    slopes = {}
    for key in _series_keys(rows, spec.group_column):
        mine = [r for r in rows if r[spec.group_column] == key]
        mine.sort(key=lambda r: float(r["mse"]))
        mse = np.array([float(r["mse"]) for r in mine])
        cost = np.array([float(r["cost"]) for r in mine])
        if np.all(mse > 0.0) and np.all(cost > 0.0):
            slope = _fit_slope(np.log(mse), np.log(cost))
        else:
            slope = float("nan")
        label = _label(key, slope)
        ax.loglog(mse, cost, marker="o", label=label)
        labels.append(label)
        slopes[label] = slope
    ax.set_xlabel("MSE")
    ax.set_ylabel("cost")
    ax.set_title(spec.input_path.stem)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=150)
    plt.close(fig)
    return RenderSummary(output_path=spec.output_path, series=tuple(labels),
                         slopes=slopes)


def render(spec: FigureSpec) -> RenderSummary:
    """Render one figure from a benchmark CSV table.

    The input is validated before any drawing, so a schema problem or an
    empty table never leaves a partial image behind.
    """
    if spec.kind == "rates":
        return _render_rates(spec)
    return _render_cost(spec)
