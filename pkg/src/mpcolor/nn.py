"""MLP blocks, parameter registry, Adam optimizer, and checkpoint files.

Everything runs in float64; the gradient-check tolerances in the tests assume
it. Checkpoints are a single JSON document (shapes + values + a fingerprint of
the architecture/config), which keeps identical runs byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .ioutil import atomic_write_text

CHECKPOINT_FORMAT = "mpcolor-checkpoint-v1"


class CheckpointError(ValueError):
    pass


def uniform_fan_in(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Uniform init in [-sqrt(6/fan_in), sqrt(6/fan_in)]; fan_in = shape[0]."""
    bound = np.sqrt(6.0 / shape[0])
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input first) plus the output activation."""

    widths: tuple[int, ...]
    out_activation: str = "none"  # none | softmax | sigmoid
    hidden_slope: float = 0.01

    def __post_init__(self) -> None:
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if self.out_activation not in ("none", "softmax", "sigmoid"):
            raise ValueError(f"unknown output activation {self.out_activation!r}")


class ParamSet:
    """Ordered registry of named trainable tensors."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; shapes must match exactly."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise CheckpointError(f"parameter name mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, t in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise CheckpointError(
                    f"shape mismatch for {name!r}: checkpoint {arr.shape}, model {t.value.shape}"
                )
            t.value = arr
            t.grad = None

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None


class Mlp:
    """Dense feed-forward block: affine chains with leaky-rectifier hidden units."""

    def __init__(self, spec: MlpSpec, params: ParamSet, prefix: str, rng: np.random.Generator):
        self.spec = spec
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (w_in, w_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            self.weights.append(params.register(f"{prefix}.w{i}", uniform_fan_in((w_in, w_out), rng)))
            self.biases.append(params.register(f"{prefix}.b{i}", np.zeros(w_out)))

    def forward(self, x) -> Tensor:
        x = ag.as_tensor(x)
        if x.value.shape[1] != self.spec.widths[0]:
            raise ValueError(
                f"MLP expects input width {self.spec.widths[0]}, got {x.value.shape[1]}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = ag.affine(x, w, b)
            if i < last:
                x = ag.leaky_relu(x, self.spec.hidden_slope)
        if self.spec.out_activation == "softmax":
            x = ag.softmax_rows(x)
        elif self.spec.out_activation == "sigmoid":
            x = ag.sigmoid(x)
        return x

    __call__ = forward


class Adam:
    """Adaptive-moment optimizer; ``step`` consumes and zeroes the gradients."""

    def __init__(self, params: ParamSet, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params.tensors()]
        self._v = [np.zeros_like(p.value) for p in params.tensors()]
        self._scratch = [np.zeros_like(p.value) for p in params.tensors()]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        # lr*(m/bias1)/(sqrt(v/bias2)+eps) rearranged so the loop runs in
        # place on preallocated buffers
        scale = self.lr * math.sqrt(bias2) / bias1
        eps_hat = self.eps * math.sqrt(bias2)
        for p, m, v, s in zip(self.params.tensors(), self._m, self._v, self._scratch):
            g = p.grad if p.grad is not None else 0.0
            np.multiply(m, b1, out=m)
            np.multiply(g, 1.0 - b1, out=s)
            np.add(m, s, out=m)
            np.multiply(v, b2, out=v)
            np.multiply(g, g, out=s)
            np.multiply(s, 1.0 - b2, out=s)
            np.add(v, s, out=v)
            np.sqrt(v, out=s)
            np.add(s, eps_hat, out=s)
            np.divide(m, s, out=s)
            np.multiply(s, scale, out=s)
            np.subtract(p.value, s, out=p.value)
            p.grad = None


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], fingerprint: dict) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "fingerprint": fingerprint,
        "arrays": {
            name: {"shape": list(a.shape), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for name, a in arrays.items()
        },
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint file: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unrecognized checkpoint format {doc.get('format')!r}")
    arrays = {}
    for name, rec in doc["arrays"].items():
        shape = tuple(rec["shape"])
        data = np.asarray(rec["data"], dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if data.size != expected:
            raise CheckpointError(f"array {name!r} has {data.size} values, shape {shape}")
        arrays[name] = data.reshape(shape)
    return arrays, doc.get("fingerprint", {})
