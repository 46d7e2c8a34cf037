"""Instance parsing/serialization and the planted synthetic-corpus generator.

Two text formats are supported:

* DIMACS ``p edge`` (1-indexed, ``c`` comment lines); the color count is not
  part of the format and must be supplied by the caller.
* A native edge list: first line ``n k``, one ``u v`` line per edge and one
  ``a node color`` line per anchor, all 0-indexed, LF line endings.

Planted instances are built around a known proper k-coloring; a k-clique
spanning one node per class pins the chromatic number to exactly k, so solve
rates measured on these corpora are meaningful.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import ConflictGraph, ContractError, conflict_count
from .ioutil import atomic_write_text

MANIFEST_FORMAT = "mpcolor-corpus-v1"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# ---------------------------------------------------------------------------
# DIMACS

def parse_dimacs(text: str, k: int) -> ConflictGraph:
    """Parse a DIMACS ``p edge`` document into a ConflictGraph with ``k`` colors."""
    node_count = None
    edges: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        if parts[0] == "p":
            if len(parts) != 4 or parts[1] != "edge":
                raise ParseError(f"malformed problem line {line!r}", lineno)
            try:
                node_count = int(parts[2])
                int(parts[3])
            except ValueError:
                raise ParseError(f"non-integer counts in {line!r}", lineno) from None
        elif parts[0] == "e":
            if node_count is None:
                raise ParseError("edge line before problem line", lineno)
            if len(parts) != 3:
                raise ParseError(f"malformed edge line {line!r}", lineno)
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(f"non-integer endpoints in {line!r}", lineno) from None
            if not (1 <= u <= node_count and 1 <= v <= node_count):
                raise ParseError(f"vertex out of range in {line!r}", lineno)
            edges.append((u - 1, v - 1))
        else:
            raise ParseError(f"unrecognized line {line!r}", lineno)
    if node_count is None:
        raise ParseError("missing 'p edge' problem line")
    return ConflictGraph(node_count=node_count, k=k, edges=tuple(edges))


def export_dimacs(g: ConflictGraph) -> str:
    """DIMACS ``p edge`` document, 1-based; k and anchors are not
    representable in this format and are dropped."""
    lines = [f"p edge {g.node_count} {len(g.edges)}"]
    lines.extend(f"e {u + 1} {v + 1}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Native edge list

def export_edgelist(g: ConflictGraph) -> str:
    lines = [f"{g.node_count} {g.k}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    lines.extend(f"a {v} {c}" for v, c in g.anchors)
    return "\n".join(lines) + "\n"


def import_edgelist(text: str) -> ConflictGraph:
    header = None
    edges: list[tuple[int, int]] = []
    anchors: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise ParseError(f"expected 'n k' header, got {line!r}", lineno)
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise ParseError(f"non-integer header {line!r}", lineno) from None
            continue
        if parts[0] == "a":
            if len(parts) != 3:
                raise ParseError(f"malformed anchor line {line!r}", lineno)
            try:
                anchors.append((int(parts[1]), int(parts[2])))
            except ValueError:
                raise ParseError(f"non-integer anchor {line!r}", lineno) from None
        else:
            if len(parts) != 2:
                raise ParseError(f"malformed edge line {line!r}", lineno)
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"non-integer endpoints in {line!r}", lineno) from None
    if header is None:
        raise ParseError("empty document")
    n, k = header
    try:
        return ConflictGraph(node_count=n, k=k, edges=tuple(edges), anchors=tuple(anchors))
    except ContractError as exc:
        raise ParseError(str(exc)) from exc


def export_coloring(colors: np.ndarray) -> str:
    """Companion format for solutions: one ``node color`` line per node."""
    return "\n".join(f"{v} {int(c)}" for v, c in enumerate(colors)) + "\n"


def import_coloring(text: str, node_count: int) -> np.ndarray:
    colors = np.full(node_count, -1, dtype=np.int64)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"malformed coloring line {line!r}", lineno)
        try:
            v, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer coloring line {line!r}", lineno) from None
        if not 0 <= v < node_count:
            raise ParseError(f"node {v} out of range", lineno)
        colors[v] = c
    if (colors < 0).any():
        missing = int(np.argmax(colors < 0))
        raise ParseError(f"node {missing} has no color")
    return colors


# ---------------------------------------------------------------------------
# Planted generator

def generate_planted(
    n: int, k: int, density: float, seed: int | Sequence[int]
) -> tuple[ConflictGraph, np.ndarray]:
    """Random graph with chromatic number exactly ``k`` and a known witness.

    Nodes are split into k classes (sizes differing by at most one); each
    cross-class pair becomes an edge independently with probability
    ``density``; a k-clique spanning one node per class pins the chromatic
    number. Returns the graph and the planted coloring.
    """
    if n < k:
        raise ContractError(f"need n >= k, got n={n}, k={k}")
    if not 0.0 < density <= 1.0:
        raise ContractError(f"density must be in (0, 1], got {density}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    witness = np.arange(n, dtype=np.int64) % k

    cross = witness[:, None] != witness[None, :]
    coin = rng.random((n, n)) < density
    mask = np.triu(cross & coin, 1)
    edges = [(int(u), int(v)) for u, v in zip(*np.nonzero(mask))]

    reps = [int(rng.choice(np.flatnonzero(witness == c))) for c in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            edges.append((reps[i], reps[j]))

    g = ConflictGraph(node_count=n, k=k, edges=tuple(edges))
    assert conflict_count(g, witness) == 0
    return g, witness


def generate_uncolorable(
    n: int, k: int, density: float, seed: int | Sequence[int]
) -> ConflictGraph:
    """Planted instance poisoned with a (k+1)-clique, so no k-coloring exists."""
    if n < k + 1:
        raise ContractError(f"need n >= k + 1, got n={n}, k={k}")
    base, _ = generate_planted(n, k, density, seed)
    entropy = [seed] if isinstance(seed, int) else list(seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy + [1]))
    clique = rng.choice(n, size=k + 1, replace=False)
    extra = [(int(clique[i]), int(clique[j])) for i in range(k + 1) for j in range(i + 1, k + 1)]
    return ConflictGraph(node_count=n, k=k, edges=base.edges + tuple(extra))


# ---------------------------------------------------------------------------
# Corpus manifest

@dataclass(frozen=True)
class CorpusEntry:
    path: str
    seed: tuple[int, ...]
    n: int
    k: int
    density: float
    planted_chromatic_number: int | None
    witness_path: str | None = None
    uncolorable: bool = False


@dataclass(frozen=True)
class CorpusManifest:
    seed: int
    k: int
    entries: tuple[CorpusEntry, ...] = ()

    def to_json(self) -> str:
        doc = {
            "format": MANIFEST_FORMAT,
            "seed": self.seed,
            "k": self.k,
            "entries": [
                {
                    "path": e.path,
                    "seed": list(e.seed),
                    "n": e.n,
                    "k": e.k,
                    "density": e.density,
                    "planted_chromatic_number": e.planted_chromatic_number,
                    "witness_path": e.witness_path,
                    "uncolorable": e.uncolorable,
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        doc = json.loads(text)
        if doc.get("format") != MANIFEST_FORMAT:
            raise ParseError(f"unrecognized manifest format {doc.get('format')!r}")
        entries = tuple(
            CorpusEntry(
                path=e["path"],
                seed=tuple(e["seed"]),
                n=e["n"],
                k=e["k"],
                density=e["density"],
                planted_chromatic_number=e["planted_chromatic_number"],
                witness_path=e.get("witness_path"),
                uncolorable=e.get("uncolorable", False),
            )
            for e in doc["entries"]
        )
        return cls(seed=doc["seed"], k=doc["k"], entries=entries)


def generate_instance(entry: CorpusEntry) -> tuple[ConflictGraph, np.ndarray | None]:
    """Regenerate one instance from its manifest entry (bitwise-deterministic)."""
    if entry.uncolorable:
        return generate_uncolorable(entry.n, entry.k, entry.density, entry.seed), None
    g, witness = generate_planted(entry.n, entry.k, entry.density, entry.seed)
    return g, witness


def generate_corpus(
    out_dir: str | Path,
    count: int,
    n_range: tuple[int, int] = (20, 200),
    k: int = 3,
    density: float = 0.3,
    seed: int = 42,
    uncolorable_fraction: float = 0.0,
) -> CorpusManifest:
    """Write ``count`` instances plus a manifest; same seed reproduces the bytes.

    Instance sizes are drawn uniformly from ``n_range``. Per-instance seeds are
    derived as (seed, index + 1), so regeneration needs only the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    sizes = size_rng.integers(n_range[0], n_range[1] + 1, size=count)
    n_uncolorable = int(round(count * uncolorable_fraction))
    entries = []
    for i in range(count):
        uncol = i < n_uncolorable
        entry = CorpusEntry(
            path=f"g{i:04d}.graph",
            seed=(seed, i + 1),
            n=int(sizes[i]),
            k=k,
            density=density,
            planted_chromatic_number=None if uncol else k,
            witness_path=None if uncol else f"g{i:04d}.witness",
            uncolorable=uncol,
        )
        g, witness = generate_instance(entry)
        atomic_write_text(out_dir / entry.path, export_edgelist(g))
        if witness is not None:
            atomic_write_text(out_dir / entry.witness_path, export_coloring(witness))
        entries.append(entry)
    manifest = CorpusManifest(seed=seed, k=k, entries=tuple(entries))
    atomic_write_text(out_dir / "manifest.json", manifest.to_json())
    return manifest


def load_corpus(manifest_path: str | Path) -> tuple[CorpusManifest, list[ConflictGraph]]:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = CorpusManifest.from_json(manifest_path.read_text(encoding="utf-8"))
    graphs = [
        import_edgelist((manifest_path.parent / e.path).read_text(encoding="utf-8"))
        for e in manifest.entries
    ]
    return manifest, graphs
