#!/usr/bin/env python3
"""Run every experiment config in configs/ through the forest-lab CLI.

Outputs land in results/<experiment-config-name>/ as CSV + manifest; pass
--quick to shrink grids and replicate counts for a fast smoke run.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

QUICK_OVERRIDES = {
    "risk-sweep": {"n_grid": [512, 1024], "trees": 16, "replicates": 20},
    "decompose": {"k_grid": [16, 64], "trees": 8, "r_outer": 4, "r_inner": 6},
    "overlap": {"depth_grid": [1, 4, 8], "samples": 20000},
    "multinomial": {"m_grid": [1, 2, 4], "samples": 50000},
    "adaptive-hist": {"depth": 128, "trees": 20},
    "learn-probs": {"n": 1000, "trials": 200},
    "consistency": {"n_grid": [256, 1024], "replicates": 60, "trees": 16},
    "bounds-table": {},
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="shrink every experiment for a smoke run")
    parser.add_argument("--results", default=str(ROOT / "results"), help="output root directory")
    args = parser.parse_args()

    results = Path(args.results)
    for config_path in sorted((ROOT / "configs").glob("*.json")):
        doc = json.loads(config_path.read_text())
        experiment = doc["experiment"]
        out_dir = results / config_path.stem
        if args.quick:
            doc["params"].update(QUICK_OVERRIDES.get(experiment, {}))
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump(doc, fh)
            tmp_config = fh.name
        cmd = ["forest-lab", experiment, "--config", tmp_config, "--out", str(out_dir)]
        print("+", " ".join(cmd), flush=True)
        proc = subprocess.run(cmd)
        if proc.returncode != 0:
            print(f"experiment {config_path.name} failed with exit code {proc.returncode}", file=sys.stderr)
            return proc.returncode
    print(f"all experiments written under {results}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
