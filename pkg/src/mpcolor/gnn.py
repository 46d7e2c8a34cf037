"""The message-passing coloring network and its iterative inference loop.

Each node carries two vectors: a color-estimate distribution ``f1`` (width k,
row-stochastic) and a latent embedding ``f2`` (width ``d_embed``). A layer
sends ``f1_src - f1_dst`` along every directed edge, scales it by a learned
sigmoid attention score of the endpoint pair, aggregates incoming messages
per node via elementwise max / min / mean / std, then updates ``f2`` from
(f2, aggregate) and ``f1`` from (f1, new f2) through small MLPs, the latter
with a softmax head so rows stay distributions.

The model stacks five such layers with distinct parameters. Inference starts
from random one-hot rows and re-feeds the output distribution for a fixed
number of passes; ``f2`` restarts at zero on every pass, so state flows
between passes only through ``f1``. Anchored nodes are clamped to their
anchor's one-hot row before every pass and on the returned result.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import SegmentSpec, Tensor
from .graph import ConflictGraph, ContractError, validate_soft_assignment
from .nn import CheckpointError, Mlp, MlpSpec, ParamSet, load_checkpoint, save_checkpoint

STD_EPS = 1e-8  # inside the sqrt of the std aggregation


@dataclass(frozen=True)
class GnnConfig:
    k: int
    d_embed: int = 32
    att_hidden: int = 32
    update_hidden: int = 64
    num_layers: int = 5

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ContractError("need at least 2 colors")

    def fingerprint(self) -> dict:
        return {
            "kind": "gnn-coloring",
            "k": self.k,
            "d_embed": self.d_embed,
            "att_hidden": self.att_hidden,
            "update_hidden": self.update_hidden,
            "num_layers": self.num_layers,
        }


@dataclass(frozen=True)
class InferenceConfig:
    forward_passes: int = 10
    init_seed: int | tuple[int, ...] = 0

    def __post_init__(self) -> None:
        if self.forward_passes < 1:
            raise ContractError("forward_passes must be >= 1")


@dataclass(frozen=True)
class EdgeStructure:
    """Directed-edge arrays plus the segment layout for per-node aggregation."""

    src: np.ndarray
    dst: np.ndarray
    spec: SegmentSpec

    @classmethod
    def from_graph(cls, g: ConflictGraph) -> "EdgeStructure":
        src, dst = g.directed_edges
        return cls(src=src, dst=dst, spec=SegmentSpec.from_sorted_dst(dst, g.node_count))


class GnnLayer:
    def __init__(self, cfg: GnnConfig, params: ParamSet, prefix: str, rng: np.random.Generator):
        k, d = cfg.k, cfg.d_embed
        self.attention = Mlp(MlpSpec((2 * k, cfg.att_hidden, 1), "sigmoid"), params, f"{prefix}.att", rng)
        self.embed_update = Mlp(MlpSpec((d + 4 * k, cfg.update_hidden, d)), params, f"{prefix}.emb", rng)
        self.color_update = Mlp(MlpSpec((k + d, cfg.update_hidden, k), "softmax"), params, f"{prefix}.col", rng)

    def forward(self, es: EdgeStructure, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        hsrc = ag.gather_rows(f1, es.src)
        hdst = ag.gather_rows(f1, es.dst)
        score = self.attention(ag.concat_cols([hsrc, hdst]))
        msg = ag.mul(ag.sub(hsrc, hdst), score)

        mean = ag.segment_mean(msg, es.spec)
        mean_sq = ag.segment_mean(ag.mul(msg, msg), es.spec)
        var = ag.relu(ag.sub(mean_sq, ag.mul(mean, mean)))
        # Shifted so a zero-variance segment aggregates to exactly 0 while the
        # derivative at 0 stays finite.
        std = ag.sub(ag.sqrt(ag.add(var, STD_EPS)), float(np.sqrt(STD_EPS)))
        agg = ag.concat_cols([
            ag.segment_max(msg, es.spec),
            ag.segment_min(msg, es.spec),
            mean,
            std,
        ])

        f2_next = self.embed_update(ag.concat_cols([f2, agg]))
        f1_next = self.color_update(ag.concat_cols([f1, f2_next]))
        return f1_next, f2_next


class GnnModel:
    """Five-layer stack with distinct per-layer parameters."""

    def __init__(self, cfg: GnnConfig, seed: int | Sequence[int] = 0):
        self.cfg = cfg
        self.params = ParamSet()
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.layers = [GnnLayer(cfg, self.params, f"layer{i}", rng) for i in range(cfg.num_layers)]

    def forward_t(self, es: EdgeStructure, f1: Tensor) -> Tensor:
        """Tensor-level forward of one full pass; f2 starts at zeros."""
        n = f1.value.shape[0]
        f2 = ag.as_tensor(np.zeros((n, self.cfg.d_embed)))
        for layer in self.layers:
            f1, f2 = layer.forward(es, f1, f2)
        return f1

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        fingerprint = {"arch": self.cfg.fingerprint(), "meta": meta or {}}
        save_checkpoint(path, self.params.arrays(), fingerprint)

    @classmethod
    def load(cls, path: str | Path) -> tuple["GnnModel", dict]:
        arrays, fingerprint = load_checkpoint(path)
        arch = fingerprint.get("arch")
        if not arch or arch.get("kind") != "gnn-coloring":
            raise CheckpointError("checkpoint does not describe a coloring model")
        cfg = GnnConfig(
            k=arch["k"],
            d_embed=arch["d_embed"],
            att_hidden=arch["att_hidden"],
            update_hidden=arch["update_hidden"],
            num_layers=arch["num_layers"],
        )
        model = cls(cfg, seed=0)
        model.params.load_arrays(arrays)
        return model, fingerprint.get("meta", {})


# ---------------------------------------------------------------------------
# Array-level entry points

def layer_forward(
    layer: GnnLayer, g: ConflictGraph, f1: np.ndarray, f2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    es = EdgeStructure.from_graph(g)
    f1_t, f2_t = layer.forward(es, ag.as_tensor(np.asarray(f1, dtype=np.float64)),
                               ag.as_tensor(np.asarray(f2, dtype=np.float64)))
    return f1_t.value, f2_t.value


def model_forward(model: GnnModel, g: ConflictGraph, f1_init: np.ndarray) -> np.ndarray:
    f1_init = validate_soft_assignment(g, f1_init)
    if g.k != model.cfg.k:
        raise ContractError(f"graph has k={g.k} but model was built for k={model.cfg.k}")
    es = EdgeStructure.from_graph(g)
    return model.forward_t(es, ag.as_tensor(f1_init)).value


def random_onehot(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return np.eye(k)[rng.integers(0, k, size=n)]


def clamp_anchors(f1: np.ndarray, g: ConflictGraph) -> np.ndarray:
    """Copy of ``f1`` with every anchored node's row forced to its anchor one-hot."""
    if not g.anchors:
        return f1
    out = f1.copy()
    for v, c in g.anchors:
        out[v] = 0.0
        out[v, c] = 1.0
    return out


def iterative_inference(model: GnnModel, g: ConflictGraph, cfg: InferenceConfig) -> np.ndarray:
    """Random one-hot start, then ``forward_passes`` re-fed forward passes."""
    if g.k != model.cfg.k:
        raise ContractError(f"graph has k={g.k} but model was built for k={model.cfg.k}")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.init_seed))
    es = EdgeStructure.from_graph(g)
    f1 = random_onehot(g.node_count, g.k, rng)
    for _ in range(cfg.forward_passes):
        f1 = clamp_anchors(f1, g)
        f1 = model.forward_t(es, ag.as_tensor(f1)).value
    return clamp_anchors(f1, g)
