"""Classical coloring comparators and the exhaustive verification oracle.

DSATUR and Welsh-Powell are unbounded-palette algorithms; under a fixed k
they run with an online clamp: a node whose greedy color would land at or
beyond k takes the least-conflicting in-range color instead. ``colors_used``
always reports the unbounded requirement, so the clamp never hides how many
colors the classic algorithm wanted. Neither baseline consults anchors.

``brute_force`` enumerates all k^n assignments (anchored nodes pinned) and
is the ground truth the CSP and pipeline are checked against; it refuses
graphs above 16 nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import BalanceStats, ConflictGraph, ContractError

BRUTE_FORCE_MODES = ("feasibility", "min_conflicts", "best_balanced")
_MAX_BRUTE_NODES = 16
_CHUNK = 1 << 16


def _edge_conflicts(g: ConflictGraph, colors: np.ndarray) -> int:
    """Same-color edge count without the palette check, since an explicit k
    above ``g.k`` is allowed here."""
    if not g.edges:
        return 0
    e = np.asarray(g.edges)
    return int(np.count_nonzero(colors[e[:, 0]] == colors[e[:, 1]]))


def _stats_for(coloring: np.ndarray, n: int, k: int) -> BalanceStats:
    counts = np.bincount(coloring, minlength=k)
    ideal = n / k
    dev = counts - ideal
    return BalanceStats(
        counts=tuple(int(c) for c in counts),
        ideal=ideal,
        squared_deviation=float(np.dot(dev, dev)),
        max_spread=int(counts.max() - counts.min()),
    )


@dataclass(frozen=True)
class BaselineResult:
    coloring: np.ndarray
    colors_used: int
    conflicts_at_k: int
    stats: BalanceStats


def _least_conflicting(g: ConflictGraph, colors: np.ndarray, v: int, k: int) -> int:
    """In-range color clashing with the fewest already-colored neighbors."""
    clashes = np.zeros(k, dtype=np.int64)
    for nb in g.adjacency[v]:
        c = colors[nb]
        if c >= 0:
            clashes[c] += 1
    return int(np.argmin(clashes))  # argmin takes the lowest index on ties


def _dsatur_run(g: ConflictGraph, limit: int | None) -> np.ndarray:
    """Saturation-degree greedy; ``limit`` caps the palette via the clamp."""
    n = g.node_count
    colors = np.full(n, -1, dtype=np.int64)
    neighbor_colors: list[set[int]] = [set() for _ in range(n)]
    degrees = np.array([g.degree(v) for v in range(n)], dtype=np.int64)
    for _ in range(n):
        v = min(
            (u for u in range(n) if colors[u] < 0),
            key=lambda u: (-len(neighbor_colors[u]), -degrees[u], u),
        )
        c = 0
        while c in neighbor_colors[v]:
            c += 1
        if limit is not None and c >= limit:
            c = _least_conflicting(g, colors, v, limit)
        colors[v] = c
        for nb in g.adjacency[v]:
            if colors[nb] < 0:
                neighbor_colors[nb].add(c)
    return colors


def dsatur(g: ConflictGraph, k: int | None = None) -> BaselineResult:
    """DSATUR with ties broken by degree then node index.

    The unbounded run supplies ``colors_used``; a second run clamped to k
    supplies the reported coloring. The two runs are identical until the
    first clamp event, so ``colors_used <= k`` implies a conflict-free result.
    """
    k = g.k if k is None else k
    unbounded = _dsatur_run(g, None)
    colors_used = int(unbounded.max()) + 1
    if colors_used <= k:
        clamped = unbounded
    else:
        clamped = _dsatur_run(g, k)
    return BaselineResult(
        coloring=clamped,
        colors_used=colors_used,
        conflicts_at_k=_edge_conflicts(g, clamped),
        stats=_stats_for(clamped, g.node_count, k),
    )


def welsh_powell(g: ConflictGraph, k: int | None = None) -> BaselineResult:
    """Degree-descending color-class construction; ties by node index.

    Nodes left uncolored after k classes take the least-conflicting in-range
    color, in the same degree-descending order.
    """
    k = g.k if k is None else k
    n = g.node_count
    order = sorted(range(n), key=lambda v: (-g.degree(v), v))
    virtual = np.full(n, -1, dtype=np.int64)
    c = 0
    while np.any(virtual < 0):
        members: list[int] = []
        member_set: set[int] = set()
        for v in order:
            if virtual[v] < 0 and not any(nb in member_set for nb in g.adjacency[v]):
                virtual[v] = c
                members.append(v)
                member_set.add(v)
        c += 1
    colors_used = c

    if colors_used <= k:
        clamped = virtual
    else:
        clamped = np.where(virtual < k, virtual, -1)
        for v in order:
            if clamped[v] < 0:
                clamped[v] = _least_conflicting(g, clamped, v, k)
    return BaselineResult(
        coloring=clamped,
        colors_used=colors_used,
        conflicts_at_k=_edge_conflicts(g, clamped),
        stats=_stats_for(clamped, n, k),
    )


@dataclass(frozen=True)
class BruteForceResult:
    mode: str
    feasible: bool
    coloring: np.ndarray | None
    conflicts: int | None
    stats: BalanceStats | None


def _enumerate_chunks(g: ConflictGraph, k: int):
    """Yield (chunk, n) color matrices covering every assignment once.

    Anchored nodes are pinned, so the space is k^(free nodes).
    """
    n = g.node_count
    anchor = g.anchor_map
    free = [v for v in range(n) if v not in anchor]
    total = k ** len(free)
    base = np.zeros(n, dtype=np.int64)
    for v, c in anchor.items():
        base[v] = c
    powers = k ** np.arange(len(free), dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        block = np.broadcast_to(base, (idx.size, n)).copy()
        if free:
            block[:, free] = (idx[:, None] // powers[None, :]) % k
        yield block


def _row_conflicts(g: ConflictGraph, block: np.ndarray) -> np.ndarray:
    out = np.zeros(block.shape[0], dtype=np.int64)
    for u, v in g.edges:
        out += block[:, u] == block[:, v]
    return out


def brute_force(g: ConflictGraph, k: int | None = None, mode: str = "feasibility") -> BruteForceResult:
    """Exhaustive enumeration oracle; refuses more than 16 nodes."""
    if mode not in BRUTE_FORCE_MODES:
        raise ContractError(f"unknown mode {mode!r}; expected one of {BRUTE_FORCE_MODES}")
    k = g.k if k is None else k
    if g.node_count > _MAX_BRUTE_NODES:
        raise ContractError(
            f"brute force refuses {g.node_count} nodes (limit {_MAX_BRUTE_NODES})"
        )

    best_conflicts = None
    best_row = None
    best_balance_key = None
    best_balance_row = None
    for block in _enumerate_chunks(g, k):
        conflicts = _row_conflicts(g, block)
        i = int(np.argmin(conflicts))
        if best_conflicts is None or conflicts[i] < best_conflicts:
            best_conflicts = int(conflicts[i])
            best_row = block[i].copy()
        if mode == "feasibility" and best_conflicts == 0:
            break
        if mode == "min_conflicts" and best_conflicts == 0:
            break
        if mode == "best_balanced":
            zero = np.flatnonzero(conflicts == 0)
            if zero.size:
                counts = np.stack([(block[zero] == c).sum(axis=1) for c in range(k)], axis=1)
                spread = counts.max(axis=1) - counts.min(axis=1)
                sqdev = ((counts - g.node_count / k) ** 2).sum(axis=1)
                j = int(np.lexsort((zero, sqdev, spread))[0])
                key = (int(spread[j]), float(sqdev[j]))
                if best_balance_key is None or key < best_balance_key:
                    best_balance_key = key
                    best_balance_row = block[zero[j]].copy()

    n = g.node_count
    feasible = best_conflicts == 0
    if mode == "feasibility":
        row = best_row if feasible else None
        return BruteForceResult(mode, feasible, row, 0 if feasible else None,
                                _stats_for(row, n, k) if feasible else None)
    if mode == "min_conflicts":
        return BruteForceResult(mode, feasible, best_row, best_conflicts,
                                _stats_for(best_row, n, k))
    if best_balance_row is None:
        return BruteForceResult(mode, False, None, None, None)
    return BruteForceResult(mode, True, best_balance_row, 0, _stats_for(best_balance_row, n, k))
