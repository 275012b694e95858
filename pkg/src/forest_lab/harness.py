"""Experiment orchestration: configs, deterministic runs, CSV + manifest.

Every experiment resolves to a single root seed; per-point and per-replicate
seeds are derived positionally from it (see :mod:`forest_lab.rng`), so a run
is reproducible byte-for-byte from its manifest regardless of thread count.
Floats are printed with 17 significant digits and no locale dependence.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .adaptive import adaptive_linear_tree, estimate_selection_probs
from .analytics import (
    expected_overlap,
    expected_overlap_mc,
    halving_upper_bound,
    mc_bias_variance,
    mc_risk,
    multinomial_halving_expectation,
    multinomial_halving_mc,
    normal_approx_check,
    simulate_forest_predictions,
)
from .bounds import BoundInputs, bias_upper_bound, optimal_leaf_count, reference_rates, risk_upper_bound, variance_upper_bound
from .forest import ModelSpec, depth_for_leaves
from .rng import derive, generator
from .trees import SelectionProbs

EXPERIMENTS = (
    "risk-sweep",
    "decompose",
    "overlap",
    "multinomial",
    "adaptive-hist",
    "learn-probs",
    "bounds-table",
    "consistency",
)

#: positional stream tag per experiment, recorded in the manifest
_EXPERIMENT_TAGS = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}

#: root seed used when neither config nor CLI provides one (never wall-clock)
DEFAULT_SEED = 0


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description: experiment kind, seed, output, params."""

    experiment: str
    seed: int
    out_dir: str
    threads: int
    params: dict

    def derived_seed(self) -> int:
        return derive(self.seed, _EXPERIMENT_TAGS[self.experiment])


DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "risk-sweep": {
        "model": {"kind": "sparse-linear", "beta": [1.0], "sigma": 0.1},
        "n_grid": [512, 1024, 2048, 4096, 8192, 16384],
        "k_rule": "optimal-pow2",
        "k_grid": None,
        "probs": None,
        "trees": 200,
        "replicates": 200,
        "queries": 8,
    },
    "decompose": {
        "model": {"kind": "sparse-linear", "beta": [1.0, 1.0], "sigma": 0.0},
        "n": 65536,
        "n_per_leaf": None,  # when set, n = n_per_leaf * k_n per grid point
        "k_grid": [16, 32, 64, 128, 256, 512, 1024],
        "probs": None,
        "trees": 48,
        "r_outer": 10,
        "r_inner": 10,
        "queries": 16,
    },
    "overlap": {"dim": 2, "strong": [0, 1], "depth_grid": [1, 2, 4, 6, 8, 10, 12], "samples": 200000},
    "multinomial": {"m_grid": [1, 2, 3, 4, 5, 6, 7, 8], "categories": [2, 3], "samples": 1000000},
    "adaptive-hist": {
        "dim": 8,
        "depth": 1024,
        "trees": 100,
        "m_n": None,
        "with_replacement": False,
        "beta_seed": 7,
        "beta_kind": "uniform",
    },
    "learn-probs": {
        "dim": 6,
        "strong": [0, 1],
        "sigma": 0.1,
        "n": 5000,
        "m_n": 6,
        "trials": 2000,
        "with_replacement": False,
    },
    "bounds-table": {"s_max": 12, "d": 12},
    "consistency": {
        "dim": 2,
        "sigma": 0.1,
        "n_grid": [256, 1024, 4096],
        "k_exponent": 0.6,
        "points": 10,
        "replicates": 400,
        "trees": 64,
    },
}


def _model_from_params(raw: dict) -> ModelSpec:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("model: expected an object with a 'kind' field")
    kind = raw["kind"]
    sigma = float(raw.get("sigma", 0.0))
    try:
        if kind == "sparse-linear":
            return ModelSpec.sparse_linear(raw["beta"], sigma)
        if kind == "lipschitz-test":
            return ModelSpec.lipschitz_test(int(raw["dim"]), raw["strong"], sigma)
        if kind == "constant":
            return ModelSpec.constant(int(raw["dim"]), float(raw.get("value", 0.0)), sigma)
        if kind == "indicator":
            return ModelSpec.indicator(int(raw["dim"]), raw["strong"], sigma)
    except KeyError as exc:
        raise ConfigError(f"model: missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    raise ConfigError(f"model.kind: unknown kind {kind!r}")


def _probs_for_model(spec: ModelSpec, params: dict) -> SelectionProbs:
    if params.get("probs") is not None:
        return SelectionProbs(tuple(float(v) for v in params["probs"]))
    if spec.strong:
        return SelectionProbs.ideal(spec.strong, spec.dim)
    return SelectionProbs.uniform(spec.dim)


def round_to_power_of_two(k: float) -> int:
    """Nearest power of two (by log distance), at least 2."""
    if k <= 0:
        raise ValueError("k must be positive")
    return max(2, 2 ** round(math.log2(k)))


# ---------------------------------------------------------------------------
# experiment bodies: each returns (rows, header, manifest extras)
# ---------------------------------------------------------------------------

def _run_risk_sweep(cfg: ExperimentConfig):
    p = cfg.params
    spec = _model_from_params(p["model"])
    probs = _probs_for_model(spec, p)
    seed = cfg.derived_seed()
    if p.get("k_grid"):
        pairs = list(zip(p["n_grid"], p["k_grid"]))
        if len(p["k_grid"]) != len(p["n_grid"]):
            raise ConfigError("k_grid: must match n_grid length")
    elif p.get("k_rule") == "optimal-pow2":
        pairs = [
            (n, round_to_power_of_two(optimal_leaf_count(n, spec.s, spec.lipschitz_const, spec.sigma)))
            for n in p["n_grid"]
        ]
    else:
        raise ConfigError("k_rule: expected 'optimal-pow2' or an explicit k_grid")
    rows = []
    for i, (n, k_n) in enumerate(pairs):
        point_seed = derive(seed, i)
        est = mc_risk(
            spec, int(n), k_n, probs, int(p["trees"]), int(p["replicates"]),
            point_seed, queries=int(p["queries"]), threads=cfg.threads,
        )
        rows.append({
            "n": int(n), "k_n": k_n, "depth": depth_for_leaves(k_n),
            "mse": est.mse, "stderr": est.stderr, "M": int(p["trees"]),
            "replicates": int(p["replicates"]), "queries": int(p["queries"]),
            "point_seed": point_seed,
        })
    extras = {"m_sensitivity": _m_sensitivity_probe(spec, pairs[0], probs, p, seed)}
    return rows, list(rows[0].keys()), extras


def _m_sensitivity_probe(spec, first_pair, probs, p, seed) -> dict:
    """Cheap probe of the finite-tree-count approximation at the first point."""
    n, k_n = first_pair
    m = int(p["trees"])
    if m < 2 or spec.dim == 1:
        return {"note": "single-tree averaging is exact here", "trees": m}
    probe_seed = derive(seed, 999999)
    full = mc_risk(spec, int(n), k_n, probs, m, 8, probe_seed, queries=8)
    half = mc_risk(spec, int(n), k_n, probs, m // 2, 8, probe_seed, queries=8)
    rel = abs(full.mse - half.mse) / full.mse if full.mse else 0.0
    return {
        "note": "risk at the first grid point with M and M/2 trees (8 probe replicates)",
        "trees": m, "mse_full": full.mse, "mse_half": half.mse, "relative_delta": rel,
    }


def _run_decompose(cfg: ExperimentConfig):
    p = cfg.params
    spec = _model_from_params(p["model"])
    probs = _probs_for_model(spec, p)
    seed = cfg.derived_seed()
    rows = []
    for i, k_n in enumerate(p["k_grid"]):
        n = int(p["n_per_leaf"] * k_n) if p.get("n_per_leaf") else int(p["n"])
        point_seed = derive(seed, i)
        est = mc_bias_variance(
            spec, n, k_n, probs, int(p["trees"]), int(p["r_outer"]), int(p["r_inner"]),
            point_seed, queries=int(p["queries"]), threads=cfg.threads,
        )
        row = {
            "n": n, "k_n": k_n, "depth": depth_for_leaves(k_n),
            "variance": est.variance_term, "variance_se": est.variance_se,
            "bias_sq": est.bias_sq_term, "bias_sq_se": est.bias_sq_se,
            "total": est.total_mse, "total_se": est.total_se,
            "correction": est.correction,
        }
        try:
            b = BoundInputs(n, float(k_n), spec.s, spec.dim, spec.sigma, spec.lipschitz_const, spec.sup_norm)
            row["variance_bound"] = variance_upper_bound(b)
            row["bias_bound"] = bias_upper_bound(b)
            row["risk_bound"] = risk_upper_bound(b)
        except ValueError:
            row["variance_bound"] = float("nan")
            row["bias_bound"] = float("nan")
            row["risk_bound"] = float("nan")
        row.update({
            "M": int(p["trees"]), "r_outer": int(p["r_outer"]), "r_inner": int(p["r_inner"]),
            "queries": int(p["queries"]), "point_seed": point_seed,
        })
        rows.append(row)
    extras = {
        "m_sensitivity": {
            "note": "variance estimates include a Theta-averaging inflation of order E[tree variance] / M",
            "trees": int(p["trees"]),
        }
    }
    return rows, list(rows[0].keys()), extras


def _run_overlap(cfg: ExperimentConfig):
    p = cfg.params
    strong = tuple(int(j) for j in p["strong"])
    probs = SelectionProbs.ideal(strong, int(p["dim"]))
    seed = cfg.derived_seed()
    rows = []
    for i, depth in enumerate(p["depth_grid"]):
        point_seed = derive(seed, i)
        exact = expected_overlap(probs.p, int(depth))
        mc = expected_overlap_mc(probs.p, int(depth), int(p["samples"]), point_seed)
        rows.append({
            "d": int(p["dim"]), "s": len(strong), "depth": int(depth),
            "exact": exact, "mc": mc.value, "mc_se": mc.stderr,
            "samples": int(p["samples"]), "point_seed": point_seed,
        })
    return rows, list(rows[0].keys()), {}


def _run_multinomial(cfg: ExperimentConfig):
    p = cfg.params
    seed = cfg.derived_seed()
    rows = []
    i = 0
    for k in p["categories"]:
        prob = [1.0 / int(k)] * int(k)
        for m in p["m_grid"]:
            point_seed = derive(seed, i)
            exact = multinomial_halving_expectation(int(m), prob)
            mc = multinomial_halving_mc(int(m), prob, int(p["samples"]), point_seed)
            check = normal_approx_check(int(m), prob[0]) if int(k) == 2 else None
            rows.append({
                "m": int(m), "k": int(k), "exact": exact,
                "mc": mc.value, "mc_se": mc.stderr,
                "upper_bound": halving_upper_bound(int(m), prob),
                "normal_approx": check.approx if check else float("nan"),
                "samples": int(p["samples"]), "point_seed": point_seed,
            })
            i += 1
    return rows, list(rows[0].keys()), {}


def _run_adaptive_hist(cfg: ExperimentConfig):
    p = cfg.params
    d = int(p["dim"])
    m_n = int(p["m_n"]) if p.get("m_n") else d
    depth = int(p["depth"])
    seed = cfg.derived_seed()
    if p["beta_kind"] == "uniform":
        beta = generator(derive(int(p["beta_seed"]), 0)).uniform(-1.0, 1.0, size=d)
    elif p["beta_kind"] == "equal":
        beta = np.ones(d)
    else:
        raise ConfigError(f"beta_kind: unknown kind {p['beta_kind']!r}")
    rows = []
    counts_by_tree = []
    for t in range(int(p["trees"])):
        rng = generator(derive(seed, t))
        counts = adaptive_linear_tree(beta, m_n, depth, rng, bool(p["with_replacement"]))
        counts_by_tree.append(counts.counts)
        for j in range(d):
            rows.append({
                "tree_id": t, "coord": j, "K": counts.counts[j],
                "beta": float(beta[j]), "depth": depth, "m_n": m_n,
                "tree_seed": derive(seed, t),
            })
    arr = np.array(counts_by_tree)
    strong = beta != 0.0
    target = depth / strong.sum()
    below = float(np.mean(np.any(arr[:, strong] < target - 2.0, axis=1)))
    extras = {
        "concentration_report": {
            "note": "fraction of trees with any strong-coordinate count below depth/S - 2 (reported, not asserted)",
            "fraction_below": below,
            "per_coordinate_sample_variance": [float(v) for v in arr.var(axis=0, ddof=1)] if len(arr) > 1 else None,
        }
    }
    return rows, list(rows[0].keys()), extras


def _run_learn_probs(cfg: ExperimentConfig):
    p = cfg.params
    d = int(p["dim"])
    strong = tuple(int(j) for j in p["strong"])
    beta = np.zeros(d)
    beta[list(strong)] = 1.0
    spec = ModelSpec.sparse_linear(beta, float(p["sigma"]))
    seed = cfg.derived_seed()
    freqs = estimate_selection_probs(
        spec, int(p["n"]), int(p["m_n"]), int(p["trials"]), seed,
        with_replacement=bool(p["with_replacement"]),
    )
    rows = [
        {
            "coord": j, "freq": freqs.p[j], "is_strong": int(j in strong),
            "trials": int(p["trials"]), "n": int(p["n"]), "m_n": int(p["m_n"]),
            "sigma": float(p["sigma"]), "seed": seed,
        }
        for j in range(d)
    ]
    return rows, list(rows[0].keys()), {}


def _run_bounds_table(cfg: ExperimentConfig):
    p = cfg.params
    s_max, d = int(p["s_max"]), int(p["d"])
    if s_max > d:
        raise ConfigError("s_max: must not exceed d")
    rows = []
    for s in range(1, s_max + 1):
        r = reference_rates(s, d)
        rows.append({
            "S": s, "alpha_new": r.new, "alpha_biau": r.biau,
            "minimax_d": r.minimax_d, "minimax_S": r.minimax_s, "approx_new": r.approx_new,
        })
    return rows, list(rows[0].keys()), {}


def consistency_points(dim: int, count: int, seed: int, margin: float = 0.05) -> np.ndarray:
    """Fixed interior query points away from the indicator's jump set."""
    rng = generator(seed)
    pts = []
    while len(pts) < count:
        x = rng.uniform(0.05, 0.95, size=dim)
        if np.all(np.abs(x - 0.5) >= margin):
            pts.append(x)
    return np.array(pts)


def _run_consistency(cfg: ExperimentConfig):
    p = cfg.params
    d = int(p["dim"])
    spec = ModelSpec.indicator(d, tuple(range(d)), float(p["sigma"]))
    probs = SelectionProbs.uniform(d)
    seed = cfg.derived_seed()
    points = consistency_points(d, int(p["points"]), derive(seed, 0))
    truths = spec.predict(points)
    rows = []
    for i, n in enumerate(p["n_grid"]):
        k_n = round_to_power_of_two(float(n) ** float(p["k_exponent"]))
        reps = int(p["replicates"])
        errs = np.empty((reps, len(points)))
        for r in range(reps):
            preds = simulate_forest_predictions(
                spec, int(n), k_n, probs, int(p["trees"]), points,
                data_seed=derive(seed, i, r, 1), trees_seed=derive(seed, i, r, 2),
            )
            errs[r] = (preds - truths) ** 2
        mse = errs.mean(axis=0)
        se = errs.std(axis=0, ddof=1) / math.sqrt(reps)
        for pid in range(len(points)):
            row = {"n": int(n), "k_n": k_n, "depth": depth_for_leaves(k_n), "point_id": pid}
            for j in range(d):
                row[f"x{j}"] = float(points[pid, j])
            row.update({
                "mse": float(mse[pid]), "stderr": float(se[pid]),
                "replicates": reps, "M": int(p["trees"]), "seed": seed,
            })
            rows.append(row)
    return rows, list(rows[0].keys()), {}


_RUNNERS: dict[str, Callable] = {
    "risk-sweep": _run_risk_sweep,
    "decompose": _run_decompose,
    "overlap": _run_overlap,
    "multinomial": _run_multinomial,
    "adaptive-hist": _run_adaptive_hist,
    "learn-probs": _run_learn_probs,
    "bounds-table": _run_bounds_table,
    "consistency": _run_consistency,
}


# ---------------------------------------------------------------------------
# config resolution and persistence
# ---------------------------------------------------------------------------

def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    return doc


def resolve_config(
    experiment: str,
    file_doc: dict | None = None,
    seed: int | None = None,
    out_dir: str | None = None,
    threads: int | None = None,
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Merge defaults < config file < CLI flags into a run description."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}")
    doc = dict(file_doc or {})
    doc_experiment = doc.pop("experiment", experiment)
    if doc_experiment != experiment:
        raise ConfigError(f"experiment: config file says {doc_experiment!r}, command says {experiment!r}")
    params = dict(DEFAULT_PARAMS[experiment])
    file_params = doc.pop("params", {})
    if not isinstance(file_params, dict):
        raise ConfigError("params: must be a JSON object")
    unknown = set(file_params) - set(params)
    if unknown:
        raise ConfigError(f"params: unknown fields {sorted(unknown)} for {experiment}")
    params.update(file_params)
    if overrides:
        params.update({k: v for k, v in overrides.items() if v is not None})
    cfg_seed = seed if seed is not None else doc.pop("seed", DEFAULT_SEED)
    cfg_out = out_dir if out_dir is not None else doc.pop("out", "results")
    cfg_threads = threads if threads is not None else doc.pop("threads", 1)
    doc.pop("seed", None), doc.pop("out", None), doc.pop("threads", None)
    if doc:
        raise ConfigError(f"config: unknown top-level fields {sorted(doc)}")
    try:
        cfg_seed = int(cfg_seed)
        cfg_threads = int(cfg_threads)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    for grid_field in ("n_grid", "k_grid", "depth_grid", "m_grid", "categories"):
        if grid_field in params and params[grid_field] is not None and not params[grid_field] and grid_field != "k_grid":
            raise ConfigError(f"params.{grid_field}: grid must be non-empty")
    return ExperimentConfig(experiment, cfg_seed, str(cfg_out), cfg_threads, params)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in header])


@dataclass
class RunManifest:
    """Everything needed to re-derive a run; finalised after completion."""

    experiment: str
    version: str
    root_seed: int
    experiment_seed: int
    config: dict
    status: str = "running"
    wall_time_s: float | None = None
    outputs: list[str] | None = None
    extras: dict | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value)}")


def run(cfg: ExperimentConfig) -> Path:
    """Execute one experiment; returns the CSV path.

    The manifest is written before the run starts (status "running") and
    finalised afterwards with the wall time; re-running the resolved config
    reproduces the CSV byte-for-byte.
    """
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create output directory {out_dir}: {exc}") from exc
    csv_path = out_dir / f"{cfg.experiment}.csv"
    manifest_path = out_dir / "manifest.json"
    manifest = RunManifest(
        experiment=cfg.experiment,
        version=__version__,
        root_seed=cfg.seed,
        experiment_seed=cfg.derived_seed(),
        config={
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "out": cfg.out_dir,
            "threads": cfg.threads,
            "params": cfg.params,
        },
    )
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    started = time.perf_counter()
    rows, header, extras = _RUNNERS[cfg.experiment](cfg)
    write_csv(csv_path, header, rows)
    manifest.status = "complete"
    manifest.wall_time_s = time.perf_counter() - started
    manifest.outputs = [csv_path.name]
    manifest.extras = extras
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    return csv_path
