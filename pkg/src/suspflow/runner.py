"""Experiment dispatch, sweeps and output files.

``results.csv`` columns (fixed order)::

    experiment, sweep, sweep_value, index, quantity, value, error_estimate, truncated

``index`` numbers the sampled point (or grid entry) within a sweep value and
``quantity`` names the number in ``value``.  Floats are written with
``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, flow
from .config import ExperimentConfig, SYSTEM_KEYS, build_system, expand_symbol, with_override
from .flow import FlowSystem, HermanCocycle, SuspensionPoint
from .profiles import PowerBump, ThetaFamily

CSV_COLUMNS = ("experiment", "sweep", "sweep_value", "index", "quantity", "value", "error_estimate", "truncated")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Row:
    index: int
    quantity: str
    value: float
    error_estimate: float = 0.0
    truncated: bool = False


def _random_points(sys: FlowSystem, count: int, rng, avoid: float = 0.0) -> list[SuspensionPoint]:
    pts = []
    d = sys.base_map.dimension
    while len(pts) < count:
        pt = SuspensionPoint(rng.random(d), float(rng.random()))
        if flow.dist_to_p(sys, pt) > avoid:
            pts.append(pt)
    return pts


def _occupation(sys, params, rng):
    rows = []
    delta = float(params["delta"])
    horizons = [float(h) for h in np.atleast_1d(params["horizons"])]
    for i, pt in enumerate(_random_points(sys, int(params["points"]), rng)):
        for h in horizons:
            rep = analysis.occupation_fraction(sys, pt, h, delta)
            rows.append(Row(i, f"fraction[h={h:g}]", rep.fraction, 0.0, rep.truncated))
    return rows


def _hitting(sys, params, rng):
    rows = []
    d1, d2 = float(params["d1"]), float(params["d2"])
    blocks = int(params["blocks"])
    for i, pt in enumerate(_random_points(sys, int(params["points"]), rng, avoid=d2)):
        truncated = False
        try:
            events = analysis.hitting_sequence(sys, pt, d1, d2, blocks, max_fast=float(params["max_fast"]))
        except analysis.TruncatedSequence as e:
            events, truncated = e.events, True
        kinds = [e.kind for e in events]
        found = len(kinds) // 4
        ok = all(tuple(kinds[4 * b:4 * b + 4]) == analysis.BLOCK_PATTERN for b in range(found))
        ok = ok and all(x.fast_time < y.fast_time for x, y in zip(events, events[1:]))
        rows.append(Row(i, "blocks", float(found), 0.0, truncated))
        rows.append(Row(i, "interleaving_ok", float(ok), 0.0, truncated))
    return rows


def _gamma(sys, params, rng):
    rows = []
    d = sys.base_map.dimension
    for i in range(int(params["points"])):
        g = analysis.birkhoff_gamma_mean(sys, rng.random(d), int(params["decades"]))
        for n, m in zip(g.checkpoints, g.partial_means):
            rows.append(Row(i, f"mean[n={n}]", m))
        rows.append(Row(i, "slope", g.slope))
        rows.append(Row(i, "infinities", float(g.infinities_hit)))
    return rows


def _ball_floor(sys, params, rng):
    x = rng.random(sys.base_map.dimension)
    seed = int(rng.integers(2**31))
    v = analysis.ball_frequency_floor(sys.base_map, x, int(params["n"]), float(params["eps"]),
                                      int(params["centers"]), seed)
    return [Row(0, "floor", v)]


def _lyapunov(sys, params, rng):
    coc = HermanCocycle(float(params["lam"]), expand_symbol(params["chi"]), angle=float(params["angle"]))
    est = analysis.lyapunov_top(coc, int(params["n"]))
    return [Row(0, "exponent", est.exponent, est.tail_gap)]


def _cocycle(sys, params, rng):
    rows = []
    smax = float(params["smax"])
    for i, pt in enumerate(_random_points(sys, int(params["samples"]), rng)):
        s, t = rng.random(2) * smax
        r = analysis.cocycle_residual(sys, pt, float(s), float(t))
        rows.append(Row(i, "residual", r, 1e-8 * (1 + s + t)))
    return rows


def _rank(sys, params, rng):
    profiles = [PowerBump(int(l)) for l in params["ells"]]
    return [Row(0, "rank", float(analysis.linear_rank(profiles, [float(r) for r in params["radii"]])))]


def _family_scan(sys, params, rng):
    rows = []
    pts = _random_points(sys, int(params["points"]), rng)
    for j, th in enumerate(float(t) for t in params["thetas"]):
        fsys = FlowSystem(sys.base_map, ThetaFamily(th), sys.p_base, sys.r_v, sys.r_tilde,
                          sys.quad_tol, sys.cap, sys.max_fast)
        for i, pt in enumerate(pts):
            rep = analysis.occupation_fraction(fsys, pt, float(params["horizon"]), float(params["delta"]))
            rows.append(Row(j * len(pts) + i, f"fraction[theta={th:g}]", rep.fraction, 0.0, rep.truncated))
    return rows


def _first_hit(sys, params, rng):
    seed = int(rng.integers(2**31))
    samples = int(params["samples"])
    if params.get("d1") is None or params.get("d2") is None:
        d1, d2, rep = analysis.scan_first_hit(sys, ratio=float(params["ratio"]), shrink=float(params["shrink"]),
                                              threshold=float(params["threshold"]), samples=samples, seed=seed)
    else:
        d1, d2 = float(params["d1"]), float(params["d2"])
        rep = analysis.first_hit_slow_time(sys, d1, d2, samples, seed)
    return [
        Row(0, "d1", d1),
        Row(0, "d2", d2),
        Row(0, "min_slow_time", rep.min_slow_time),
        Row(0, "lower_bound", rep.lower_bound),
    ]


DISPATCH = {
    "occupation": _occupation,
    "hitting": _hitting,
    "gamma-divergence": _gamma,
    "ball-floor": _ball_floor,
    "lyapunov": _lyapunov,
    "cocycle-check": _cocycle,
    "rank": _rank,
    "family-scan": _family_scan,
    "first-hit": _first_hit,
}


def run_point(task):
    """Run one sweep point; ``task = (raw, experiment, params, seed_entropy)``."""
    raw, name, params, entropy = task
    sys = build_system(raw)
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    return DISPATCH[name](sys, params, rng)


def _tasks(cfg: ExperimentConfig, seed: int):
    sweep = cfg.sweep
    if not sweep:
        return [("", "", (cfg.raw, cfg.experiment, cfg.params, [seed, 0]))]
    name = str(sweep["name"])
    tasks = []
    for k, v in enumerate(sweep["values"]):
        raw, params = cfg.raw, dict(cfg.params)
        if name in SYSTEM_KEYS:
            raw = with_override(cfg.raw, name, v)
        else:
            params[name] = v
        tasks.append((name, v, (raw, cfg.experiment, params, [seed, k])))
    return tasks


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def results_csv(experiment: str, labelled_rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for sname, svalue, rows in labelled_rows:
        for r in rows:
            w.writerow([experiment, sname, _fmt(svalue), r.index, r.quantity, _fmt(r.value),
                        _fmt(r.error_estimate), _fmt(r.truncated)])
    return buf.getvalue()


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def execute(cfg: ExperimentConfig, out_dir=None, workers=None, seed=None) -> dict:
    """Run ``cfg`` and write results.csv, summary.json and manifest.json.

    Returns the manifest.  Sweep points may run in worker processes, but rows
    are merged in sweep order so the CSV does not depend on ``workers``.
    """
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers if workers is None else int(workers)
    seed = cfg.seed if seed is None else int(seed)
    labelled = _tasks(cfg, seed)
    jobs = [t for _, _, t in labelled]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(run_point, jobs))
    else:
        results = [run_point(j) for j in jobs]
    merged = [(n, v, rows) for (n, v, _), rows in zip(labelled, results)]

    files = {}
    csv_text = results_csv(cfg.experiment, merged)
    (out / "results.csv").write_text(csv_text)
    files["results"] = "results.csv"

    all_rows = [r for _, _, rows in merged for r in rows]
    truncated = sum(r.truncated for r in all_rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "seed": seed,
        "sweep": None if not cfg.sweep else {"name": cfg.sweep["name"], "values": list(cfg.sweep["values"])},
        "results": [
            {
                "sweep_value": v,
                "quantities": _group(rows),
            }
            for _, v, rows in merged
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str))
    files["summary"] = "summary.json"

    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "run_id": f"{stamp}-{cfg.digest[:12]}",
        "config_sha256": cfg.digest,
        "config": cfg.raw,
        "files": [files["results"], files["summary"], "manifest.json"],
        "wall_time_s": time.perf_counter() - start,
        "rows": len(all_rows),
        "truncated_rows": truncated,
        "workers": workers,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return manifest


def _group(rows):
    out: dict[str, list] = {}
    for r in rows:
        out.setdefault(r.quantity, []).append(_json_float(r.value))
    return out
