"""Request/response models for the coloring service."""
from __future__ import annotations

from pydantic import BaseModel, Field

from ..graph import ConflictGraph


class GraphSpec(BaseModel):
    """Wire form of a conflict graph."""

    node_count: int
    k: int
    edges: list[tuple[int, int]] = Field(default_factory=list)
    anchors: list[tuple[int, int]] = Field(default_factory=list)

    def to_graph(self) -> ConflictGraph:
        return ConflictGraph(
            node_count=self.node_count,
            k=self.k,
            edges=tuple((int(u), int(v)) for u, v in self.edges),
            anchors=tuple((int(v), int(c)) for v, c in self.anchors),
        )

    @classmethod
    def from_graph(cls, g: ConflictGraph) -> "GraphSpec":
        return cls(
            node_count=g.node_count,
            k=g.k,
            edges=[(u, v) for u, v in g.edges],
            anchors=[(v, c) for v, c in g.anchors],
        )


class SolveRequest(BaseModel):
    graph: GraphSpec
    passes: int = 10
    seed: int = 0
    stage: str = "csp"  # truncate the repair chain: inference | heuristic | csp
    run_sa: bool = True


class SolveResponse(BaseModel):
    coloring: list[int]
    conflicts: int
    max_spread: int
    stage: str
    uncolorable: bool
    report: dict


class BaselineRequest(BaseModel):
    graph: GraphSpec
    algorithm: str  # dsatur | welsh_powell


class BaselineResponse(BaseModel):
    coloring: list[int]
    colors_used: int
    conflicts: int
    max_spread: int


class GenerateRequest(BaseModel):
    n: int
    k: int = 3
    density: float = 0.3
    seed: int = 0
    uncolorable: bool = False


class GenerateResponse(BaseModel):
    graph: GraphSpec
    witness: list[int] | None


class VerifyRequest(BaseModel):
    graph: GraphSpec
    coloring: list[int]
    delta: float = 1.0


class VerifyResponse(BaseModel):
    conflicts: int
    anchor_violations: int
    counts: list[int]
    max_spread: int
    squared_deviation: float
    total_violations: int
    within_delta: bool


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool
    model_k: int | None = None
