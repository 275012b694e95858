"""Command line interface: one subcommand per experiment.

Precedence for every setting is built-in defaults < config file < CLI flag.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENTS, ConfigError, load_config_file, resolve_config, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forest-lab",
        description="Deterministic centered-random-forest experiments; CSV + manifest outputs.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--seed", type=int, metavar="U64", help="root seed (default 0, never wall-clock)")
        p.add_argument("--out", metavar="DIR", help="output directory (default results)")
        p.add_argument("--threads", type=int, metavar="N", help="worker threads for replicate loops")
        if name in ("risk-sweep", "decompose", "adaptive-hist", "consistency"):
            p.add_argument("--trees", type=int, metavar="M", help="number of trees")
        if name == "adaptive-hist":
            p.add_argument("--beta-seed", type=int, metavar="U64", help="seed for the coefficient draw")
            p.add_argument("--depth", type=int, metavar="D", help="number of splits per tree")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if getattr(args, "trees", None) is not None:
        overrides["trees"] = args.trees
    if getattr(args, "beta_seed", None) is not None:
        overrides["beta_seed"] = args.beta_seed
    if getattr(args, "depth", None) is not None:
        overrides["depth"] = args.depth
    try:
        file_doc = load_config_file(args.config) if args.config else None
        cfg = resolve_config(
            args.experiment,
            file_doc=file_doc,
            seed=args.seed,
            out_dir=args.out,
            threads=args.threads,
            overrides=overrides,
        )
    except ConfigError as exc:
        print(f"forest-lab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        csv_path = run(cfg)
    except ConfigError as exc:
        print(f"forest-lab: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - contract maps any runtime failure to exit 3
        print(f"forest-lab: error: {exc}", file=sys.stderr)
        return 3
    print(csv_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
