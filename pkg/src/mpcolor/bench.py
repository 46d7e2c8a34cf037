"""Corpus-level evaluation: variant grid, pass sweep, and report emission.

A variant names one comparison column: a classical baseline ("dsatur",
"welsh_powell") or a pipeline truncation ("inference", "heuristic", "full"),
the latter optionally suffixed "+sa" to append the balancing anneal. Rows
carry per-graph metrics; aggregates (solve rate, balance error) are always
recomputable from the rows.

All per-graph randomness derives from one global seed and the graph's index
in the corpus, so results do not depend on scheduling order when a worker
pool is used. The pool size honors the ``MP_ENGINE_THREADS`` cap.
"""
from __future__ import annotations

import csv
import io
import json
import multiprocessing
import os
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .baselines import dsatur, welsh_powell
from .gnn import GnnModel, InferenceConfig, iterative_inference
from .graph import (
    ConflictGraph,
    ContractError,
    balance_stats,
    conflict_count,
    harden,
    total_violations,
)
from .refine import PipelineConfig, full_pipeline

BASELINE_KINDS = ("dsatur", "welsh_powell")
PIPELINE_KINDS = ("inference", "heuristic", "full")


def valid_variants() -> tuple[str, ...]:
    pipeline = tuple(PIPELINE_KINDS) + tuple(f"{p}+sa" for p in PIPELINE_KINDS)
    return BASELINE_KINDS + pipeline


def parse_variant(name: str) -> tuple[str, bool]:
    """Split a variant name into (kind, run_sa)."""
    if name in BASELINE_KINDS:
        return name, False
    base, _, suffix = name.partition("+")
    if base in PIPELINE_KINDS and suffix in ("", "sa"):
        return base, suffix == "sa"
    raise ContractError(f"unknown variant {name!r}; valid variants: {', '.join(valid_variants())}")


def _graph_seeds(seed: int, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    return (seed, index, 0), (seed, index, 1)


def evaluate_one(
    g: ConflictGraph,
    model: GnnModel | None,
    variant: str,
    pcfg: PipelineConfig,
    seed: int,
    index: int,
    graph_id: str = "",
) -> tuple[np.ndarray, dict]:
    """Run one variant on one graph; returns (coloring, report row)."""
    kind, use_sa = parse_variant(variant)
    row: dict = {
        "graph": graph_id,
        "index": index,
        "n": g.node_count,
        "m": g.edge_count,
        "variant": variant,
    }
    inf_seed, sa_seed = _graph_seeds(seed, index)

    if kind in BASELINE_KINDS:
        t0 = time.perf_counter()
        res = dsatur(g) if kind == "dsatur" else welsh_powell(g)
        elapsed = time.perf_counter() - t0
        coloring = res.coloring
        row.update(stage=kind, colors_used=res.colors_used, uncolorable=False,
                   time_total=elapsed)
    else:
        if model is None:
            raise ContractError(f"variant {variant!r} needs a model")
        cfg = replace(
            pcfg,
            inference=replace(pcfg.inference, init_seed=inf_seed),
            sa=replace(pcfg.sa, seed=sa_seed),
            run_sa=use_sa,
            max_stage="csp" if kind == "full" else kind,
        )
        coloring, report = full_pipeline(g, model, cfg)
        row.update(
            stage=report["stage"],
            colors_used=None,
            uncolorable=report["uncolorable"],
            time_total=report["times"]["total"],
        )

    stats = balance_stats(g, coloring)
    row.update(
        conflicts=conflict_count(g, coloring),
        max_spread=stats.max_spread,
        squared_deviation=stats.squared_deviation,
        total_violations=total_violations(g, coloring),
    )
    return coloring, row


_WORKER: dict = {}


def _pool_init(model_path: str | None, pcfg: PipelineConfig, variant: str, seed: int) -> None:
    _WORKER["model"] = GnnModel.load(model_path)[0] if model_path else None
    _WORKER["pcfg"] = pcfg
    _WORKER["variant"] = variant
    _WORKER["seed"] = seed


def _pool_task(args: tuple[int, str, ConflictGraph]) -> tuple[int, list, dict]:
    index, graph_id, g = args
    coloring, row = evaluate_one(
        g, _WORKER["model"], _WORKER["variant"], _WORKER["pcfg"], _WORKER["seed"], index, graph_id
    )
    return index, [int(c) for c in coloring], row


def effective_jobs(jobs: int | None) -> int:
    """Requested worker count capped by the MP_ENGINE_THREADS environment var."""
    j = jobs if jobs and jobs > 0 else 1
    env = os.environ.get("MP_ENGINE_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ContractError(f"MP_ENGINE_THREADS is not an integer: {env!r}")
        j = min(j, max(1, cap))
    return j


def evaluate_corpus(
    graphs: Sequence[tuple[str, ConflictGraph]],
    variant: str,
    pcfg: PipelineConfig,
    seed: int,
    model: GnnModel | None = None,
    model_path: str | None = None,
    jobs: int | None = 1,
) -> tuple[list[np.ndarray], list[dict]]:
    """Evaluate one variant over a corpus, optionally with a process pool.

    Parallel runs reload the model from ``model_path`` in each worker; the
    per-graph seeding makes the outcome identical to the sequential path.
    """
    parse_variant(variant)
    jobs = effective_jobs(jobs)
    tasks = [(i, gid, g) for i, (gid, g) in enumerate(graphs)]

    if jobs <= 1 or len(tasks) <= 1:
        if model is None and model_path:
            model = GnnModel.load(model_path)[0]
        out = [evaluate_one(g, model, variant, pcfg, seed, i, gid) for i, gid, g in tasks]
        return [c for c, _ in out], [r for _, r in out]

    if model_path is None and variant not in BASELINE_KINDS:
        raise ContractError("parallel evaluation needs a model checkpoint path")
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(jobs, initializer=_pool_init, initargs=(model_path, pcfg, variant, seed)) as pool:
        results = pool.map(_pool_task, tasks)
    results.sort(key=lambda r: r[0])
    colorings = [np.asarray(c, dtype=np.int64) for _, c, _ in results]
    rows = [row for _, _, row in results]
    return colorings, rows


def aggregate_rows(rows: Sequence[dict]) -> dict:
    """Solve rate and balance-error statistics over one variant's rows."""
    if not rows:
        return {"count": 0}
    conflicts = np.array([r["conflicts"] for r in rows], dtype=np.float64)
    spreads = np.array([r["max_spread"] for r in rows], dtype=np.float64)
    times = np.array([r["time_total"] for r in rows], dtype=np.float64)
    return {
        "count": len(rows),
        "solve_pct": float(100.0 * np.mean(conflicts == 0)),
        "mean_conflicts": float(conflicts.mean()),
        "mean_max_spread": float(spreads.mean()),
        "std_max_spread": float(spreads.std()),
        "mean_squared_deviation": float(np.mean([r["squared_deviation"] for r in rows])),
        "mean_time": float(times.mean()),
    }


def sweep_passes(
    graphs: Sequence[tuple[str, ConflictGraph]],
    model: GnnModel,
    passes_list: Sequence[int],
    seed: int,
) -> list[dict]:
    """Inference-only solve rate as a function of the forward-pass count."""
    sweep = []
    for passes in passes_list:
        conflicts = []
        spreads = []
        for i, (_, g) in enumerate(graphs):
            inf_seed, _ = _graph_seeds(seed, i)
            probs = iterative_inference(
                model, g, InferenceConfig(forward_passes=passes, init_seed=inf_seed)
            )
            colors = harden(probs)
            conflicts.append(conflict_count(g, colors))
            spreads.append(balance_stats(g, colors).max_spread)
        carr = np.array(conflicts, dtype=np.float64)
        sweep.append({
            "passes": int(passes),
            "solve_pct": float(100.0 * np.mean(carr == 0)),
            "mean_conflicts": float(carr.mean()),
            "mean_max_spread": float(np.mean(spreads)),
        })
    return sweep


ROW_COLUMNS = (
    "graph", "index", "n", "m", "variant", "stage", "conflicts", "max_spread",
    "squared_deviation", "total_violations", "colors_used", "uncolorable", "time_total",
)


@dataclass
class BenchReport:
    rows: list[dict]
    aggregates: dict[str, dict]
    sweep: list[dict]

    def rows_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(ROW_COLUMNS), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        names = sorted(self.aggregates)
        cols = ["variant"] + [c for c in
                              ("count", "solve_pct", "mean_conflicts", "mean_max_spread",
                               "std_max_spread", "mean_squared_deviation", "mean_time")]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for name in names:
            writer.writerow({"variant": name, **self.aggregates[name]})
        return buf.getvalue()

    def sweep_csv(self) -> str:
        if not self.sweep:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.sweep[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.sweep)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "aggregates": self.aggregates, "pass_sweep": self.sweep},
            indent=2, sort_keys=True,
        )


def bench_corpus(
    graphs: Sequence[tuple[str, ConflictGraph]],
    variants: Sequence[str],
    pcfg: PipelineConfig,
    seed: int,
    model: GnnModel | None = None,
    model_path: str | None = None,
    jobs: int | None = 1,
    pass_sweep: Sequence[int] = (),
) -> BenchReport:
    all_rows: list[dict] = []
    aggregates: dict[str, dict] = {}
    for variant in variants:
        _, rows = evaluate_corpus(
            graphs, variant, pcfg, seed, model=model, model_path=model_path, jobs=jobs
        )
        all_rows.extend(rows)
        aggregates[variant] = aggregate_rows(rows)
    sweep = []
    if pass_sweep:
        if model is None and model_path:
            model = GnnModel.load(model_path)[0]
        if model is None:
            raise ContractError("pass sweep needs a model")
        sweep = sweep_passes(graphs, model, list(pass_sweep), seed)
    return BenchReport(rows=all_rows, aggregates=aggregates, sweep=sweep)
