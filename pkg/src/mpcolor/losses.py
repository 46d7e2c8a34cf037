"""Differentiable training objectives over soft color assignments.

Colorability terms (pairwise, clique, unique) drive adjacent or co-clique
nodes toward distinct colors; the balance terms compare the aggregate color
mass against an even split; entropy and anchor terms sharpen and pin
individual rows. Every function accepts a ``Tensor`` or a plain array and
returns a scalar ``Tensor`` so it can participate in backpropagation.
"""
from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .graph import ConflictGraph, ContractError


def find_triangles(g: ConflictGraph) -> np.ndarray:
    """All triangles as an (t, 3) array of node triples with a < b < c."""
    adj = g.adjacency
    triples: list[tuple[int, int, int]] = []
    for u, v in g.edges:
        # Common neighbors above v; each triangle surfaces once via its lowest edge.
        cand_u = adj[u][adj[u] > v]
        cand_v = adj[v][adj[v] > v]
        for w in np.intersect1d(cand_u, cand_v):
            triples.append((u, v, int(w)))
    if not triples:
        return np.empty((0, 3), dtype=np.int64)
    return np.array(sorted(triples), dtype=np.int64)


def validate_cliques(g: ConflictGraph, cliques: np.ndarray) -> np.ndarray:
    """Check every listed node set is pairwise adjacent; returns the array."""
    cliques = np.asarray(cliques, dtype=np.int64)
    if cliques.size == 0:
        return np.empty((0, 3), dtype=np.int64)
    if cliques.ndim != 2:
        raise ContractError("clique set must be a 2-d array of node indices")
    edge_set = {(u, v) for u, v in g.edges}
    for row in cliques:
        nodes = sorted(int(x) for x in row)
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if (nodes[i], nodes[j]) not in edge_set:
                    raise ContractError(f"nodes {nodes[i]} and {nodes[j]} are not adjacent")
    return cliques


def loss_pairwise(g: ConflictGraph, s: "Tensor | np.ndarray") -> Tensor:
    """Sum over conflict edges of the dot product of endpoint rows."""
    s = ag.as_tensor(s)
    e = g.edge_array
    su = ag.gather_rows(s, e[:, 0])
    sv = ag.gather_rows(s, e[:, 1])
    return ag.sum_all(ag.mul(su, sv))


def loss_clique(cliques: np.ndarray, s: "Tensor | np.ndarray") -> Tensor:
    """Sum over cliques and colors of the joint same-color probability."""
    s = ag.as_tensor(s)
    cliques = np.asarray(cliques, dtype=np.int64)
    if cliques.size == 0:
        return ag.as_tensor(0.0)
    prod = ag.gather_rows(s, cliques[:, 0])
    for col in range(1, cliques.shape[1]):
        prod = ag.mul(prod, ag.gather_rows(s, cliques[:, col]))
    return ag.sum_all(prod)


def loss_unique(cliques: np.ndarray, s: "Tensor | np.ndarray") -> Tensor:
    """Penalize each clique's per-color mass for straying from exactly 1."""
    s = ag.as_tensor(s)
    cliques = np.asarray(cliques, dtype=np.int64)
    if cliques.size == 0:
        return ag.as_tensor(0.0)
    acc = ag.gather_rows(s, cliques[:, 0])
    for col in range(1, cliques.shape[1]):
        acc = ag.add(acc, ag.gather_rows(s, cliques[:, col]))
    return ag.sum_all(ag.abs_(ag.sub(acc, ag.as_tensor(1.0))))


def loss_balance_js(s: "Tensor | np.ndarray") -> Tensor:
    """Jensen-Shannon divergence between mean color usage and uniform."""
    s = ag.as_tensor(s)
    n, k = s.value.shape
    u = ag.mul(ag.col_sums(s), ag.as_tensor(1.0 / n))
    ustar = np.full(k, 1.0 / k)
    # m >= 1/(2k) everywhere, so log(m) is safe even when u has zeros.
    m = ag.mul(ag.add(u, ag.as_tensor(ustar)), ag.as_tensor(0.5))
    log_m = ag.log(m)
    kl_u = ag.sub(ag.sum_all(ag.xlogx(u)), ag.sum_all(ag.mul(u, log_m)))
    kl_ustar = ag.sub(ag.as_tensor(-math.log(k)), ag.sum_all(ag.mul(ag.as_tensor(ustar), log_m)))
    return ag.mul(ag.add(kl_u, kl_ustar), ag.as_tensor(0.5))


def loss_balance_harsh(s: "Tensor | np.ndarray", delta_loss: float) -> Tensor:
    """Squared hinge on soft color masses outside the N/K +- delta band."""
    s = ag.as_tensor(s)
    n, k = s.value.shape
    dev = ag.abs_(ag.sub(ag.col_sums(s), ag.as_tensor(n / k)))
    hinge = ag.relu(ag.sub(dev, ag.as_tensor(float(delta_loss))))
    return ag.sum_all(ag.mul(hinge, hinge))


def loss_entropy(s: "Tensor | np.ndarray") -> Tensor:
    """Mean per-node Shannon entropy (natural log)."""
    s = ag.as_tensor(s)
    n = s.value.shape[0]
    return ag.mul(ag.neg(ag.sum_all(ag.xlogx(s))), ag.as_tensor(1.0 / n))


def loss_anchor(g: ConflictGraph, s: "Tensor | np.ndarray") -> Tensor:
    """Mean cross-entropy of anchored nodes against their pinned colors."""
    if not g.anchors:
        return ag.as_tensor(0.0)
    s = ag.as_tensor(s)
    rows = np.array([v for v, _ in g.anchors], dtype=np.int64)
    cols = np.array([c for _, c in g.anchors], dtype=np.int64)
    picked = ag.gather_elems(s, rows, cols)
    return ag.mean_all(ag.neg(ag.log(picked)))
