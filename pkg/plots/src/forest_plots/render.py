"""Figure rendering for the three supported kinds.

Rendering is read-only over the CSV and deterministic: a fixed style, no
timestamps, no recomputed statistics.  Anything the figure displays beyond
raw columns (the per-coordinate reference level, bound overlays) comes
straight from columns the producing experiment wrote.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .spec import PlotSpec, SpecError, read_table

_STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "forest-plots",
}


def render(spec: PlotSpec) -> Path:
    """Produce the figure described by ``spec``; returns the output path."""
    with plt.rc_context(_STYLE):
        if spec.kind == "rate-curves":
            fig = _rate_curves(spec)
        elif spec.kind == "knj-hist":
            fig = _knj_hist(spec)
        else:
            fig = _scaling(spec)
        out = Path(spec.output)
        if out.parent != Path(""):
            out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, metadata=_no_timestamp_metadata(out.suffix.lower()))
        plt.close(fig)
    return out


def _no_timestamp_metadata(suffix: str) -> dict | None:
    if suffix == ".png":
        return {"Software": "forest-plots"}
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".pdf":
        return {"CreationDate": None}
    return None


def _floats(table: dict, column: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in table[column]])
    except ValueError as exc:
        raise SpecError(f"input: column {column!r} holds a non-numeric value: {exc}") from exc


def _rate_curves(spec: PlotSpec):
    table = read_table(spec.input, ["S", "alpha_new", "alpha_biau", "minimax_d"])
    s = _floats(table, "S")
    order = np.argsort(s)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(s[order], _floats(table, "alpha_new")[order], "o-", label="centered forest (new)")
    ax.plot(s[order], _floats(table, "alpha_biau")[order], "s--", label="Biau-style rate")
    ax.plot(s[order], _floats(table, "minimax_d")[order], "^:", label="minimax 2/(d+2)")
    ax.set_xlabel(spec.xlabel or "number of strong coordinates S")
    ax.set_ylabel(spec.ylabel or "rate exponent")
    ax.set_title(spec.title or "Convergence-rate exponents")
    ax.legend()
    fig.tight_layout()
    return fig


def _knj_hist(spec: PlotSpec):
    table = read_table(spec.input, ["coord", "K"])
    coords = np.array([int(v) for v in table["coord"]])
    counts = np.array([int(v) for v in table["K"]])
    by_coord = defaultdict(list)
    for c, k in zip(coords, counts):
        by_coord[c].append(k)
    reference = _reference_level(table, coords, counts)
    ordered = sorted(by_coord)
    ncols = min(4, len(ordered))
    nrows = -(-len(ordered) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.0 * ncols, 2.4 * nrows), squeeze=False)
    for ax in axes.flat[len(ordered):]:
        ax.set_visible(False)
    for ax, coord in zip(axes.flat, ordered):
        vals = np.array(by_coord[coord])
        lo, hi = vals.min() - 1.5, vals.max() + 1.5
        bins = max(int(hi - lo), 1)
        ax.hist(vals, bins=bins, range=(lo, hi), color="steelblue", edgecolor="white")
        if reference is not None:
            ax.axvline(reference, color="crimson", linestyle="--", linewidth=1.2)
        ax.set_title(f"coordinate {coord}", fontsize=9)
    fig.suptitle(spec.title or "Per-coordinate split counts")
    fig.supxlabel(spec.xlabel or "splits on coordinate")
    fig.supylabel(spec.ylabel or "trees")
    fig.tight_layout()
    return fig


def _reference_level(table: dict, coords: np.ndarray, counts: np.ndarray) -> float | None:
    """depth / S: depth from the CSV, S from non-zero coefficients if present."""
    if "depth" in table:
        depth = float(table["depth"][0])
    elif "tree_id" in table:
        ids = np.array([int(v) for v in table["tree_id"]])
        depth = float(counts[ids == ids[0]].sum())
    else:
        return None
    if "beta" in table:
        strong = {c for c, b in zip(coords, _floats(table, "beta")) if b != 0.0}
        s = len(strong)
    else:
        s = len(set(coords.tolist()))
    return depth / s if s else None


def _scaling(spec: PlotSpec):
    required = [spec.x_column, spec.value_column]
    if spec.bound_column:
        required.append(spec.bound_column)
    table = read_table(spec.input, required)
    x = _floats(table, spec.x_column)
    y = _floats(table, spec.value_column)
    order = np.argsort(x)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(x[order], y[order], "o-", label=spec.value_column)
    if spec.bound_column:
        ax.loglog(x[order], _floats(table, spec.bound_column)[order], "--", label=spec.bound_column)
    se_col = f"{spec.value_column}_se"
    if se_col in table:
        se = _floats(table, se_col)
        ax.errorbar(x[order], y[order], yerr=3 * se[order], fmt="none", ecolor="gray", alpha=0.6)
    ax.set_xlabel(spec.xlabel or spec.x_column)
    ax.set_ylabel(spec.ylabel or spec.value_column)
    ax.set_title(spec.title or f"{spec.value_column} against {spec.x_column}")
    ax.legend()
    fig.tight_layout()
    return fig
