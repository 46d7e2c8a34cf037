"""Shared fixtures. Thread caps must land before numpy is first imported."""
import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from mpcolor.graph import ConflictGraph

_GATE_LINES: list[str] = []


@pytest.fixture(scope="session")
def gate():
    """Recorder for the end-to-end gates; lines reappear in the summary."""
    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{name}: {'PASS' if ok else 'FAIL'}  ({detail})"
        _GATE_LINES.append(line)
        print(f"\n[gate] {line}", flush=True)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _GATE_LINES:
        terminalreporter.section("acceptance gates")
        for line in _GATE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def triangle():
    return ConflictGraph(node_count=3, k=3, edges=((0, 1), (1, 2), (0, 2)))


@pytest.fixture
def k4():
    edges = tuple((u, v) for u in range(4) for v in range(u + 1, 4))
    return ConflictGraph(node_count=4, k=3, edges=edges)


@pytest.fixture
def path5():
    return ConflictGraph(node_count=5, k=3, edges=((0, 1), (1, 2), (2, 3), (3, 4)))


@pytest.fixture
def star6():
    """K_{1,6}: hub 0 with six leaves; balanced 3-coloring has counts (1,3,3)."""
    return ConflictGraph(node_count=7, k=3, edges=tuple((0, i) for i in range(1, 7)))


def random_graph(rng: np.random.Generator, n: int, k: int = 3,
                 density: float = 0.3, anchors: int = 0) -> ConflictGraph:
    """Erdos-Renyi conflict graph, optionally with a few random anchors."""
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < density]
    anchor_map = {}
    if anchors:
        nodes = rng.choice(n, size=min(anchors, n), replace=False)
        anchor_map = {int(v): int(rng.integers(k)) for v in nodes}
    return ConflictGraph(node_count=n, k=k, edges=tuple(edges),
                         anchors=tuple(sorted(anchor_map.items())))


def random_simplex_rows(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Random row-stochastic matrix (Dirichlet-ish via normalized exponentials)."""
    x = -np.log(rng.random((n, k)))
    return x / x.sum(axis=1, keepdims=True)
