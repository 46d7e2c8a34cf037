"""Repair and balancing stack applied after inference.

Three tools, escalating in cost:

* ``gnn_heuristic_refine``: greedy single pass over nodes in
  most-constrained-first order, assigning the argmax color when it is safe
  and the best safe color otherwise. Fast, no guarantee.
* ``csp_repair``: exact branch-and-bound over the k^n space with anchors
  fixed, minimizing deviation from the input coloring. Proves
  uncolorability when it exhausts the space.
* ``sa_balance``: simulated annealing over conflict-free recolorings to
  shrink the class-size spread; tracks the best state seen so the output is
  never worse than the input.

``full_pipeline`` chains them: inference, harden, then each repair stage
only if conflicts remain, then balancing only on conflict-free colorings.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gnn import GnnModel, InferenceConfig, iterative_inference
from .graph import (
    BalanceStats,
    ConflictGraph,
    ContractError,
    balance_stats,
    conflict_count,
    harden,
    validate_soft_assignment,
)

RESORT_MODES = ("always", "fallback")
CSP_OBJECTIVES = ("count", "arithmetic")


@dataclass
class RefineState:
    """Partial coloring plus the bookkeeping the greedy pass sorts on."""

    colors: np.ndarray
    safe: list[set[int]]
    uncertainty: np.ndarray

    @classmethod
    def fresh(cls, g: ConflictGraph, probs: np.ndarray) -> "RefineState":
        return cls(
            colors=np.full(g.node_count, -1, dtype=np.int64),
            safe=[set(range(g.k)) for _ in range(g.node_count)],
            uncertainty=1.0 - probs.max(axis=1),
        )

    def order_key(self, v: int) -> tuple:
        return (len(self.safe[v]), -self.uncertainty[v], v)

    def assign(self, g: ConflictGraph, v: int, c: int) -> None:
        self.colors[v] = c
        for nb in g.adjacency[v]:
            if self.colors[nb] < 0:
                self.safe[nb].discard(c)


def gnn_heuristic_refine(
    g: ConflictGraph, probs: np.ndarray, resort: str = "always"
) -> np.ndarray:
    """Greedy most-constrained-first assignment guided by the soft probabilities.

    ``resort="always"`` re-ranks the remaining nodes after every assignment;
    ``resort="fallback"`` keeps the initial order and re-sorts only after an
    assignment that had to override the argmax, as in the published listing.
    Always returns a complete coloring; a node whose safe set is empty takes
    its argmax color and the resulting conflict stands.
    """
    if resort not in RESORT_MODES:
        raise ContractError(f"unknown resort mode {resort!r}; expected one of {RESORT_MODES}")
    probs = validate_soft_assignment(g, probs)
    state = RefineState.fresh(g, probs)
    for v, c in g.anchors:
        state.assign(g, v, c)

    remaining = [v for v in range(g.node_count) if state.colors[v] < 0]

    def step(v: int) -> bool:
        """Assign one node; True when the argmax had to be overridden."""
        c_star = int(np.argmax(probs[v]))
        if c_star in state.safe[v]:
            state.assign(g, v, c_star)
            return False
        if state.safe[v]:
            c = min(state.safe[v], key=lambda cc: (-probs[v, cc], cc))
        else:
            c = c_star  # no safe color exists; keep the conflict for the CSP
        state.assign(g, v, c)
        return True

    if resort == "always":
        pending = set(remaining)
        while pending:
            v = min(pending, key=state.order_key)
            pending.remove(v)
            step(v)
    else:
        queue = sorted(remaining, key=state.order_key)
        while queue:
            v = queue.pop(0)
            if step(v):
                queue.sort(key=state.order_key)
    return state.colors


@dataclass(frozen=True)
class CspResult:
    status: str  # feasible | infeasible | timeout
    coloring: np.ndarray | None
    nodes_changed: int | None
    proven_optimal: bool
    explored: int


def csp_repair(
    g: ConflictGraph,
    initial: np.ndarray,
    time_budget: float = 10.0,
    probs: np.ndarray | None = None,
    objective: str = "count",
    balance_weight: float = 0.0,
) -> CspResult:
    """Branch-and-bound recoloring that stays as close to ``initial`` as possible.

    Hard constraints (edge disequality, anchors) are mandatory; the soft
    objective is the number of nodes recolored away from ``initial``
    (``objective="arithmetic"`` switches to the sum of |new - old| treating
    colors as numbers). An exhausted search space proves uncolorability;
    hitting the budget with no feasible incumbent reports a timeout, while an
    incumbent found before the budget expires is returned as feasible even if
    its optimality was not proven.
    """
    if objective not in CSP_OBJECTIVES:
        raise ContractError(f"unknown objective {objective!r}; expected one of {CSP_OBJECTIVES}")
    initial = np.asarray(initial, dtype=np.int64)
    if initial.shape != (g.node_count,):
        raise ContractError("initial coloring has wrong length")
    n, k = g.node_count, g.k
    deadline = time.perf_counter() + float(time_budget)

    domains: list[set[int]] = [set(range(k)) for _ in range(n)]
    colors = np.full(n, -1, dtype=np.int64)
    for v, c in g.anchors:
        domains[v] = {c}

    def value_cost(v: int, c: int) -> float:
        base = initial[v]
        if 0 <= base < k:
            if objective == "count":
                return 0.0 if c == base else 1.0
            return float(abs(c - base))
        return 0.0

    def value_order(v: int) -> list[int]:
        base = int(initial[v]) if 0 <= initial[v] < k else -1
        if probs is not None:
            rest = sorted((c for c in range(k) if c != base), key=lambda c: (-probs[v, c], c))
        else:
            rest = [c for c in range(k) if c != base]
        return ([base] if base >= 0 else []) + rest

    best_coloring: np.ndarray | None = None
    best_cost = math.inf
    explored = 0

    def balance_cost(assignment: np.ndarray) -> float:
        counts = np.bincount(assignment, minlength=k)
        return float(np.abs(counts - n / k).sum())

    def search(unassigned: list[int], partial_cost: float) -> bool:
        """Depth-first with forward checking; returns False when out of time."""
        nonlocal best_coloring, best_cost, explored
        explored += 1
        if explored % 256 == 0 and time.perf_counter() > deadline:
            return False
        if best_coloring is not None and partial_cost >= best_cost:
            return True  # balance term is >= 0, so this bound stays admissible
        if not unassigned:
            total = partial_cost + (balance_weight * balance_cost(colors) if balance_weight else 0.0)
            if total < best_cost:
                best_cost = total
                best_coloring = colors.copy()
            return True
        # Most-constrained variable first.
        v = min(unassigned, key=lambda u: (len(domains[u]), u))
        rest = [u for u in unassigned if u != v]
        neighbors = g.adjacency[v]
        for c in value_order(v):
            if c not in domains[v]:
                continue
            pruned: list[int] = []
            ok = True
            for nb in neighbors:
                if colors[nb] < 0 and c in domains[nb]:
                    domains[nb].discard(c)
                    pruned.append(nb)
                    if not domains[nb]:
                        ok = False
                        break
            if ok:
                colors[v] = c
                alive = search(rest, partial_cost + value_cost(v, c))
                colors[v] = -1
                if not alive:
                    for nb in pruned:
                        domains[nb].add(c)
                    return False
            for nb in pruned:
                domains[nb].add(c)
        return True

    completed = search(list(range(n)), 0.0)

    if best_coloring is not None:
        changed = int(np.count_nonzero(best_coloring != initial))
        return CspResult(
            status="feasible",
            coloring=best_coloring,
            nodes_changed=changed,
            proven_optimal=completed,
            explored=explored,
        )
    if completed:
        return CspResult(status="infeasible", coloring=None, nodes_changed=None,
                         proven_optimal=True, explored=explored)
    return CspResult(status="timeout", coloring=None, nodes_changed=None,
                     proven_optimal=False, explored=explored)


@dataclass(frozen=True)
class SaConfig:
    iterations: int | None = None  # default: one per node
    initial_temp: float = 1.0
    final_temp: float = 0.01
    cooling: float | None = None  # default: geometric decay hitting final_temp at the cap
    seed: int | tuple[int, ...] = 0

    def __post_init__(self) -> None:
        if self.initial_temp <= 0 or self.final_temp <= 0:
            raise ContractError("temperatures must be > 0")
        if self.cooling is not None and not (0 < self.cooling < 1):
            raise ContractError("cooling factor must lie in (0, 1)")
        if self.iterations is not None and self.iterations < 0:
            raise ContractError("iterations must be >= 0")


def sa_balance(g: ConflictGraph, coloring: np.ndarray, cfg: SaConfig = SaConfig()) -> np.ndarray:
    """Anneal class sizes toward an even split without ever creating a conflict.

    Moves recolor one node; conflicting or anchor-breaking moves are rejected
    outright, improving moves (lexicographic on max spread then squared
    deviation) are always taken, and worsening moves pass with probability
    exp(-spread_delta / T). The best coloring seen is returned, so the result
    is never less balanced than the input.
    """
    coloring = np.asarray(coloring, dtype=np.int64)
    if conflict_count(g, coloring) != 0:
        raise ContractError("sa_balance requires a conflict-free input coloring")
    n, k = g.node_count, g.k
    iters = n if cfg.iterations is None else cfg.iterations
    if iters == 0 or n == 0:
        return coloring.copy()
    alpha = cfg.cooling if cfg.cooling is not None else (cfg.final_temp / cfg.initial_temp) ** (1.0 / iters)

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    cur = coloring.copy()
    counts = np.bincount(cur, minlength=k)
    anchored = set(g.anchor_map)

    def key(cnts: np.ndarray) -> tuple[int, float]:
        ideal = n / k
        return (int(cnts.max() - cnts.min()), float(((cnts - ideal) ** 2).sum()))

    cur_key = key(counts)
    best = cur.copy()
    best_key = cur_key
    temp = cfg.initial_temp

    for _ in range(iters):
        v = int(rng.integers(n))
        shift = int(rng.integers(1, k)) if k > 1 else 0
        c_new = (int(cur[v]) + shift) % k
        accept_draw = rng.random()  # drawn every step to keep the stream aligned
        temp_now = temp
        temp *= alpha
        if shift == 0 or v in anchored:
            continue
        if any(cur[nb] == c_new for nb in g.adjacency[v]):
            continue
        c_old = int(cur[v])
        counts[c_old] -= 1
        counts[c_new] += 1
        new_key = key(counts)
        if new_key < cur_key:
            accept = True
        else:
            delta = new_key[0] - cur_key[0]
            accept = accept_draw < math.exp(-delta / temp_now)
        if accept:
            cur[v] = c_new
            cur_key = new_key
            if new_key < best_key:
                best = cur.copy()
                best_key = new_key
        else:
            counts[c_old] += 1
            counts[c_new] -= 1
    return best


PIPELINE_STAGES = ("inference", "heuristic", "csp")


@dataclass(frozen=True)
class PipelineConfig:
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    resort: str = "always"
    csp_budget: float = 10.0
    csp_objective: str = "count"
    sa: SaConfig = field(default_factory=SaConfig)
    run_sa: bool = True
    max_stage: str = "csp"  # truncate the repair chain at this stage

    def __post_init__(self) -> None:
        if self.max_stage not in PIPELINE_STAGES:
            raise ContractError(
                f"unknown max_stage {self.max_stage!r}; expected one of {PIPELINE_STAGES}"
            )
        if self.resort not in RESORT_MODES:
            raise ContractError(f"unknown resort mode {self.resort!r}")


def _stats_dict(stats: BalanceStats) -> dict:
    return {
        "counts": [int(c) for c in stats.counts],
        "max_spread": int(stats.max_spread),
        "squared_deviation": float(stats.squared_deviation),
    }


def full_pipeline(
    g: ConflictGraph, model: GnnModel, cfg: PipelineConfig = PipelineConfig()
) -> tuple[np.ndarray, dict]:
    """Inference then staged repair; returns the coloring and a stage report.

    The report names the stage whose output survived ("inference",
    "heuristic", or "csp"), per-stage conflict counts and wall times, the
    balance before and after annealing, and an ``uncolorable`` flag when the
    CSP proves no proper coloring exists.
    """
    report: dict = {"stage": None, "uncolorable": False, "conflicts": {}, "times": {}}

    t0 = time.perf_counter()
    probs = iterative_inference(model, g, cfg.inference)
    colors = harden(probs)
    report["times"]["inference"] = time.perf_counter() - t0
    c_inf = conflict_count(g, colors)
    report["conflicts"]["inference"] = c_inf

    final = colors
    if c_inf == 0 or cfg.max_stage == "inference":
        report["stage"] = "inference"
    else:
        t1 = time.perf_counter()
        refined = gnn_heuristic_refine(g, probs, resort=cfg.resort)
        report["times"]["heuristic"] = time.perf_counter() - t1
        c_heur = conflict_count(g, refined)
        report["conflicts"]["heuristic"] = c_heur
        if c_heur <= c_inf:
            final = refined
        if c_heur == 0 or cfg.max_stage == "heuristic":
            report["stage"] = "heuristic"
        else:
            t2 = time.perf_counter()
            res = csp_repair(
                g, final, time_budget=cfg.csp_budget, probs=probs, objective=cfg.csp_objective
            )
            report["times"]["csp"] = time.perf_counter() - t2
            report["csp_status"] = res.status
            report["stage"] = "csp"
            if res.status == "feasible":
                final = res.coloring
                report["conflicts"]["csp"] = 0
                report["csp_nodes_changed"] = res.nodes_changed
            else:
                report["uncolorable"] = res.status == "infeasible"
                report["conflicts"]["csp"] = conflict_count(g, final)

    final_conflicts = conflict_count(g, final)
    if final_conflicts == 0 and cfg.run_sa:
        report["balance_before"] = _stats_dict(balance_stats(g, final))
        t3 = time.perf_counter()
        final = sa_balance(g, final, cfg.sa)
        report["times"]["sa"] = time.perf_counter() - t3
        report["balance_after"] = _stats_dict(balance_stats(g, final))
        final_conflicts = conflict_count(g, final)

    report["conflicts"]["final"] = final_conflicts
    report["times"]["total"] = sum(report["times"].values())
    return final, report
