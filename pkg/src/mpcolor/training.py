"""Two-stage training of the coloring network with three joint schemes.

The objective splits into a primary group (colorability terms plus the
entropy and anchor regularizers) and a balance group (divergence from even
color usage). ``joint_init`` optimizes both with a fixed coefficient;
``fine_tune`` adapts the balance coefficient beta downward whenever the
colorability loss stops improving, so feasibility always outranks balance.

Schemes:
  dynamic_weighting    one backward pass on L1 + beta * L2
  gradient_reweighting separate backward passes, grads combined as g1 + beta * g2
  dual_optimizer       two optimizers; each step updates on L1 then on L2

Each training example runs the iterative inference loop with gradients
flowing through the final pass only; earlier passes run without a tape.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .gnn import EdgeStructure, GnnModel, clamp_anchors, random_onehot
from .graph import ConflictGraph, ContractError
from .losses import (
    find_triangles,
    loss_anchor,
    loss_balance_harsh,
    loss_balance_js,
    loss_clique,
    loss_entropy,
    loss_pairwise,
    loss_unique,
)
from .nn import Adam

COLORABILITY_TERMS = ("pairwise", "clique", "unique")
PRIMARY_TERMS = COLORABILITY_TERMS + ("entropy", "anchor")
BALANCE_TERMS = ("balance_js", "balance_harsh")
SCHEMES = ("dynamic_weighting", "gradient_reweighting", "dual_optimizer")
STAGES = ("joint_init", "fine_tune")


class TrainingDiverged(RuntimeError):
    """Raised when a loss turns non-finite; carries the offending epoch."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


@dataclass(frozen=True)
class LossConfig:
    pairwise: float = 1.0
    clique: float = 0.0
    unique: float = 0.0
    balance_js: float = 1.0
    balance_harsh: float = 0.0
    entropy: float = 0.0
    anchor: float = 0.0
    delta_loss: float = 1.0
    beta0: float = 1.0
    beta_decay: float = 0.5
    beta_patience: int = 3
    beta_min: float = 1e-3

    def __post_init__(self) -> None:
        for name in PRIMARY_TERMS + BALANCE_TERMS:
            if getattr(self, name) < 0:
                raise ContractError(f"loss weight {name} must be >= 0")
        if all(getattr(self, name) == 0 for name in COLORABILITY_TERMS):
            raise ContractError("at least one colorability term must be enabled")
        if not (0 < self.beta_decay < 1):
            raise ContractError("beta_decay must lie in (0, 1)")
        if self.beta_patience < 1:
            raise ContractError("beta_patience must be >= 1")

    def enabled_terms(self) -> tuple[str, ...]:
        return tuple(t for t in PRIMARY_TERMS + BALANCE_TERMS if getattr(self, t) > 0)

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        return _config_from_dict(cls, data)


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "dynamic_weighting"
    epochs: int = 100
    # 3e-4 rather than the optimizer's own 1e-3: long corpus runs at 1e-3
    # eventually step into saturated one-hot outputs whose gradients are
    # exactly zero, freezing the model in a degenerate single-color state.
    lr: float = 3e-4
    lr2: float | None = None
    stage: str = "joint_init"
    seed: int = 0
    passes: int = 2
    jitter_passes: bool = True
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ContractError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.stage not in STAGES:
            raise ContractError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.passes < 1:
            raise ContractError("passes must be >= 1")
        if self.scheme == "dual_optimizer" and self.lr2 is None:
            raise ContractError("dual_optimizer needs a second learning rate (lr2)")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return _config_from_dict(cls, data)


def _config_from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ContractError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


class BetaController:
    """Non-increasing beta; decays after ``patience`` epochs without L1 progress."""

    def __init__(self, lc: LossConfig, adaptive: bool):
        self.beta = lc.beta0
        self.decay = lc.beta_decay
        self.patience = lc.beta_patience
        self.beta_min = lc.beta_min
        self.adaptive = adaptive
        self.best = math.inf
        self.streak = 0

    def update(self, l1_epoch_mean: float) -> float:
        """Feed one epoch's mean colorability loss; returns beta for the next epoch."""
        if not self.adaptive:
            return self.beta
        if l1_epoch_mean < self.best - 1e-12:
            self.best = l1_epoch_mean
            self.streak = 0
        else:
            self.streak += 1
            if self.streak >= self.patience:
                self.beta = max(self.beta * self.decay, self.beta_min)
                self.streak = 0
        return self.beta


@dataclass(frozen=True)
class PreparedGraph:
    g: ConflictGraph
    es: EdgeStructure
    triangles: np.ndarray


def prepare_graph(g: ConflictGraph, lc: LossConfig) -> PreparedGraph:
    need_triangles = lc.clique > 0 or lc.unique > 0
    tri = find_triangles(g) if need_triangles else np.empty((0, 3), dtype=np.int64)
    return PreparedGraph(g=g, es=EdgeStructure.from_graph(g), triangles=tri)


def _term_tensors(p: PreparedGraph, out: Tensor, lc: LossConfig, normalize: bool) -> dict[str, Tensor]:
    g = p.g
    n = g.node_count
    terms: dict[str, Tensor] = {}
    if lc.pairwise > 0:
        t = loss_pairwise(g, out)
        if normalize and len(g.edges) > 0:
            t = ag.mul(t, ag.as_tensor(1.0 / len(g.edges)))
        terms["pairwise"] = t
    if lc.clique > 0:
        t = loss_clique(p.triangles, out)
        if normalize:
            t = ag.mul(t, ag.as_tensor(1.0 / max(1, len(p.triangles))))
        terms["clique"] = t
    if lc.unique > 0:
        t = loss_unique(p.triangles, out)
        if normalize:
            t = ag.mul(t, ag.as_tensor(1.0 / max(1, len(p.triangles))))
        terms["unique"] = t
    if lc.entropy > 0:
        terms["entropy"] = loss_entropy(out)
    if lc.anchor > 0 and g.anchors:
        terms["anchor"] = loss_anchor(g, out)
    if lc.balance_js > 0:
        terms["balance_js"] = loss_balance_js(out)
    if lc.balance_harsh > 0:
        t = loss_balance_harsh(out, lc.delta_loss)
        if normalize:
            t = ag.mul(t, ag.as_tensor((g.k / n) ** 2))
        terms["balance_harsh"] = t
    return terms


def _weighted(terms: dict[str, Tensor], lc: LossConfig, names: Sequence[str]) -> Tensor:
    total = ag.as_tensor(0.0)
    for name in names:
        if name in terms:
            total = ag.add(total, ag.mul(terms[name], ag.as_tensor(getattr(lc, name))))
    return total


@dataclass
class TrainResult:
    history: list[dict]
    final_beta: float

    def to_csv(self) -> str:
        if not self.history:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.history[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.history)
        return buf.getvalue()


def _inference_rollout(
    model: GnnModel, p: PreparedGraph, total_passes: int, rng: np.random.Generator
) -> np.ndarray:
    """Run all but the final pass without a tape; return the final-pass input."""
    f1 = random_onehot(p.g.node_count, p.g.k, rng)
    with ag.no_grad():
        for _ in range(total_passes - 1):
            f1 = clamp_anchors(f1, p.g)
            f1 = model.forward_t(p.es, ag.as_tensor(f1)).value
    return clamp_anchors(f1, p.g)


def _combine_grads(model: GnnModel, g1: dict, beta: float) -> None:
    for name, param in model.params.items():
        a = g1.get(name)
        b = param.grad
        if b is None:
            param.grad = a
        elif a is None:
            param.grad = beta * b if isinstance(b, float) else b * beta
        else:
            param.grad = a + beta * b


def train(
    model: GnnModel,
    corpus: Sequence[ConflictGraph],
    lc: LossConfig,
    tc: TrainConfig,
) -> TrainResult:
    """Optimize ``model`` in place over ``corpus``; returns per-epoch history."""
    if not corpus:
        raise ContractError("training corpus is empty")
    for g in corpus:
        if g.k != model.cfg.k:
            raise ContractError(f"corpus graph has k={g.k}, model expects k={model.cfg.k}")

    prepared = [prepare_graph(g, lc) for g in corpus]
    rng = np.random.default_rng(np.random.SeedSequence(tc.seed))
    controller = BetaController(lc, adaptive=(tc.stage == "fine_tune"))
    beta = controller.beta

    if tc.scheme == "dual_optimizer":
        opt_primary = Adam(model.params, lr=tc.lr)
        opt_balance = Adam(model.params, lr=tc.lr2)
    else:
        opt_primary = Adam(model.params, lr=tc.lr)
        opt_balance = None

    history: list[dict] = []
    enabled = lc.enabled_terms()
    for epoch in range(tc.epochs):
        order = rng.permutation(len(prepared))
        sums = {name: 0.0 for name in enabled}
        l1_sum = 0.0
        l2_sum = 0.0
        for idx in order:
            p = prepared[idx]
            total_passes = int(rng.integers(1, tc.passes + 1)) if tc.jitter_passes else tc.passes
            f1_in = _inference_rollout(model, p, total_passes, rng)
            out = model.forward_t(p.es, ag.as_tensor(f1_in))
            terms = _term_tensors(p, out, lc, tc.normalize)

            values = {name: float(t.value) for name, t in terms.items()}
            if any(not math.isfinite(v) for v in values.values()):
                raise TrainingDiverged(epoch)
            for name, v in values.items():
                sums[name] += v
            l1_sum += sum(getattr(lc, n) * values[n] for n in COLORABILITY_TERMS if n in values)
            l2_sum += sum(getattr(lc, n) * values[n] for n in BALANCE_TERMS if n in values)

            primary = _weighted(terms, lc, PRIMARY_TERMS)
            balance = _weighted(terms, lc, BALANCE_TERMS)

            if tc.scheme == "dynamic_weighting":
                total = ag.add(primary, ag.mul(balance, ag.as_tensor(beta)))
                ag.backward(total)
                opt_primary.step()
            elif tc.scheme == "gradient_reweighting":
                ag.backward(primary)
                g1 = {name: _copy_grad(t.grad) for name, t in model.params.items()}
                ag.backward(balance)
                _combine_grads(model, g1, beta)
                opt_primary.step()
            else:  # dual_optimizer
                ag.backward(primary)
                opt_primary.step()
                # Params moved, so the balance step gets a fresh final pass.
                out2 = model.forward_t(p.es, ag.as_tensor(f1_in))
                terms2 = _term_tensors(p, out2, lc, tc.normalize)
                balance2 = _weighted(terms2, lc, BALANCE_TERMS)
                if not math.isfinite(float(balance2.value)):
                    raise TrainingDiverged(epoch)
                ag.backward(balance2)
                opt_balance.step()

        count = len(prepared)
        row: dict = {"epoch": epoch, "beta": beta}
        for name in enabled:
            row[name] = sums[name] / count
        row["l1"] = l1_sum / count
        row["l2"] = l2_sum / count
        history.append(row)

        beta = controller.update(l1_sum / count)
        if tc.scheme == "dual_optimizer":
            # The second optimizer's step size plays the role of beta here.
            opt_balance.lr = tc.lr2 * beta

    return TrainResult(history=history, final_beta=beta)


def _copy_grad(g):
    if g is None:
        return None
    return g.copy() if isinstance(g, np.ndarray) else g


def train_two_stage(
    model: GnnModel,
    corpus: Sequence[ConflictGraph],
    lc: LossConfig,
    tc: TrainConfig,
    init_fraction: float = 0.5,
) -> TrainResult:
    """Split the epoch budget into joint_init then fine_tune and run both."""
    if not (0 < init_fraction < 1):
        raise ContractError("init_fraction must lie in (0, 1)")
    init_epochs = max(1, int(round(tc.epochs * init_fraction)))
    fine_epochs = max(1, tc.epochs - init_epochs)
    first = train(model, corpus, lc, replace(tc, stage="joint_init", epochs=init_epochs))
    second = train(
        model, corpus, lc,
        replace(tc, stage="fine_tune", epochs=fine_epochs, seed=tc.seed + 1),
    )
    for i, row in enumerate(second.history):
        row["epoch"] = init_epochs + i
    return TrainResult(history=first.history + second.history, final_beta=second.final_beta)
