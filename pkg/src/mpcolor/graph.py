"""Conflict-graph data model and the coloring/balance metrics used everywhere else.

Graphs are undirected, simple (no self-loops, no duplicate edges) and carry a
fixed number of colors ``k`` plus optional anchors (nodes pinned to a color).
Colorings and soft assignments are plain numpy arrays; the helpers here
validate them at the boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np


class ContractError(ValueError):
    """An argument violated a documented precondition."""


def _normalize_edges(node_count: int, edges: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    seen = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ContractError(f"self-loop on node {u}")
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise ContractError(f"edge ({u}, {v}) out of range for {node_count} nodes")
        seen.add((u, v) if u < v else (v, u))
    return tuple(sorted(seen))


@dataclass(frozen=True)
class ConflictGraph:
    """Undirected conflict graph with ``k`` masks and optional anchored nodes.

    Instances are immutable; derived adjacency structures are cached lazily.
    """

    node_count: int
    k: int
    edges: tuple[tuple[int, int], ...] = ()
    anchors: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.node_count <= 0:
            raise ContractError("node_count must be positive")
        if self.k <= 0:
            raise ContractError("k must be positive")
        object.__setattr__(self, "edges", _normalize_edges(self.node_count, self.edges))
        anchors = self.anchors.items() if isinstance(self.anchors, Mapping) else self.anchors
        norm = {}
        for v, c in anchors:
            v, c = int(v), int(c)
            if not 0 <= v < self.node_count:
                raise ContractError(f"anchor node {v} out of range")
            if not 0 <= c < self.k:
                raise ContractError(f"anchor color {c} out of range for k={self.k}")
            if norm.get(v, c) != c:
                raise ContractError(f"conflicting anchors for node {v}")
            norm[v] = c
        object.__setattr__(self, "anchors", tuple(sorted(norm.items())))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def anchor_map(self) -> dict[int, int]:
        return dict(self.anchors)

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Edges as an (m, 2) int array; (0, 2) when the graph has no edges."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, ...]:
        """Per-node sorted neighbor arrays."""
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(np.asarray(sorted(a), dtype=np.int64) for a in nbrs)

    @cached_property
    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, sorted by destination then source.

        Returns (src, dst); the dst array is non-decreasing, which lets
        aggregation code use contiguous per-node segments.
        """
        ea = self.edge_array
        src = np.concatenate([ea[:, 0], ea[:, 1]])
        dst = np.concatenate([ea[:, 1], ea[:, 0]])
        order = np.lexsort((src, dst))
        return src[order], dst[order]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])


@dataclass(frozen=True)
class BalanceStats:
    """Per-color node counts and the derived balance metrics.

    ``max_spread`` (max minus min class size) is the balance error figure
    reported throughout; ``squared_deviation`` is sum((n_c - N/K)^2).
    """

    counts: tuple[int, ...]
    ideal: float
    squared_deviation: float
    max_spread: int


def validate_coloring(g: ConflictGraph, colors: np.ndarray) -> np.ndarray:
    colors = np.asarray(colors, dtype=np.int64)
    if colors.shape != (g.node_count,):
        raise ContractError(
            f"coloring length {colors.shape} does not match node count {g.node_count}"
        )
    if colors.size and (colors.min() < 0 or colors.max() >= g.k):
        raise ContractError(f"color indices must lie in [0, {g.k})")
    return colors


def validate_soft_assignment(g: ConflictGraph, probs: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (g.node_count, g.k):
        raise ContractError(
            f"soft assignment shape {probs.shape} does not match ({g.node_count}, {g.k})"
        )
    if probs.size and probs.min() < -tol:
        raise ContractError("soft assignment has negative entries")
    if probs.size and np.abs(probs.sum(axis=1) - 1.0).max() > tol:
        raise ContractError("soft assignment rows must sum to 1")
    return probs


def conflict_count(g: ConflictGraph, colors: np.ndarray) -> int:
    """Number of edges whose endpoints share a color."""
    colors = validate_coloring(g, colors)
    ea = g.edge_array
    if ea.shape[0] == 0:
        return 0
    return int(np.count_nonzero(colors[ea[:, 0]] == colors[ea[:, 1]]))


def balance_stats(g: ConflictGraph, colors: np.ndarray) -> BalanceStats:
    colors = validate_coloring(g, colors)
    counts = np.bincount(colors, minlength=g.k)
    ideal = g.node_count / g.k
    dev = counts - ideal
    return BalanceStats(
        counts=tuple(int(c) for c in counts),
        ideal=ideal,
        squared_deviation=float(np.dot(dev, dev)),
        max_spread=int(counts.max() - counts.min()),
    )


def hard_bound_satisfied(stats: BalanceStats, delta: float) -> bool:
    """True iff every class size is within ``delta`` of the ideal N/K load."""
    return all(abs(c - stats.ideal) <= delta for c in stats.counts)


def anchor_violations(g: ConflictGraph, colors: np.ndarray) -> int:
    colors = validate_coloring(g, colors)
    return sum(1 for v, c in g.anchors if colors[v] != c)


def total_violations(g: ConflictGraph, colors: np.ndarray, delta: float = 1.0) -> int:
    """Indicator sum of violated constraints: one per conflicting edge, one per
    color class outside the balance bound, one per contradicted anchor."""
    stats = balance_stats(g, colors)
    bound_violations = sum(1 for c in stats.counts if abs(c - stats.ideal) > delta)
    return conflict_count(g, colors) + bound_violations + anchor_violations(g, colors)


def harden(probs: np.ndarray) -> np.ndarray:
    """Argmax decode of a soft assignment; ties break toward the lowest color."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ContractError("soft assignment must be a 2-d array")
    return np.argmax(probs, axis=1).astype(np.int64)
