#!/usr/bin/env python3
"""Render the report figures from results/ produced by run_all_experiments.py.

Produces the rate-exponent comparison curves, the per-coordinate split-count
histograms, and the bound-vs-empirical scaling charts under figures/.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def render(spec: dict) -> int:
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(spec, fh)
        path = fh.name
    cmd = ["plots", "render", "--spec", path]
    print("+", " ".join(cmd), "->", spec["output"], flush=True)
    return subprocess.run(cmd).returncode


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", default=str(ROOT / "results"))
    parser.add_argument("--figures", default=str(ROOT / "figures"))
    args = parser.parse_args()
    results = Path(args.results)
    figures = Path(args.figures)
    figures.mkdir(parents=True, exist_ok=True)

    specs = []
    rates = results / "bounds_table" / "bounds-table.csv"
    if rates.exists():
        specs.append({
            "kind": "rate-curves",
            "input": str(rates),
            "output": str(figures / "rate_curves.png"),
        })
    hist = results / "adaptive_hist" / "adaptive-hist.csv"
    if hist.exists():
        specs.append({
            "kind": "knj-hist",
            "input": str(hist),
            "output": str(figures / "split_count_histograms.png"),
        })
    variance = results / "decompose_variance_s2" / "decompose.csv"
    if variance.exists():
        specs.append({
            "kind": "scaling",
            "input": str(variance),
            "output": str(figures / "variance_scaling.png"),
            "x_column": "k_n",
            "value_column": "variance",
            "bound_column": "variance_bound",
            "title": "Estimation variance against leaf count",
        })
    bias = results / "decompose_bias_s2" / "decompose.csv"
    if bias.exists():
        specs.append({
            "kind": "scaling",
            "input": str(bias),
            "output": str(figures / "bias_scaling.png"),
            "x_column": "k_n",
            "value_column": "bias_sq",
            "bound_column": "bias_bound",
            "title": "Squared bias against leaf count",
        })
    if not specs:
        print("no inputs found; run scripts/run_all_experiments.py first", file=sys.stderr)
        return 1
    for spec in specs:
        code = render(spec)
        if code != 0:
            return code
    print(f"figures written under {figures}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
