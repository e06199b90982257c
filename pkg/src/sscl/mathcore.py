"""Dense float64 math and exact backpropagation for ReLU MLPs.

Matrices are plain 2-D ``numpy.ndarray`` objects (float64, C-contiguous);
a vector is a 1 x n row. Logits, not probabilities, cross every boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DimensionError, LabelError

ParamGrads = list  # list[np.ndarray] aligned with MlpModel.params()


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite, C-contiguous float64 2-D array (1-D becomes a row)."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def _labels(y, n_rows: int, n_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(y)).astype(np.int64, copy=False)
    if labels.ndim != 1 or labels.shape[0] != n_rows:
        raise DimensionError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"label out of range [0, {n_classes})")
    return np.ascontiguousarray(labels)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(z) -> np.ndarray:
    """Row-wise softmax with max-shift."""
    z = as_matrix(z, name="logits")
    if z.shape[1] == 0:
        raise DimensionError("softmax of an empty vector")
    return kernels.softmax_rows(z)


def cross_entropy(z, y) -> float:
    """Mean over rows of ``-log softmax(z)[y]`` (nats)."""
    z = as_matrix(z, name="logits")
    labels = _labels(y, z.shape[0], z.shape[1])
    losses, _ = kernels.xent_rows(z, labels)
    return float(losses.mean())


def grad_cross_entropy(z, y) -> np.ndarray:
    """Per-row logit gradient ``softmax(z) - onehot(y)`` (the vanilla gradient)."""
    z = as_matrix(z, name="logits")
    labels = _labels(y, z.shape[0], z.shape[1])
    _, grad = kernels.xent_rows(z, labels)
    return grad


@dataclass(eq=False)
class MlpModel:
    """Affine layers with ReLU on every hidden layer; ``x @ W + b`` convention.

    ``version`` increases on every in-place parameter update so that stale
    forward tapes can be detected.
    """

    weights: list
    biases: list
    activation: str = "relu"
    version: int = 0

    def __post_init__(self):
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ContractError("weights and biases must be non-empty and paired")
        for i, W in enumerate(self.weights):
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionError(f"layer {i} input {W.shape[0]} != previous output {self.weights[i - 1].shape[1]}")
            b = self.biases[i]
            if b is not None and b.shape != (W.shape[1],):
                raise DimensionError(f"bias {i} has shape {b.shape}, expected ({W.shape[1]},)")
        self.use_bias = self.biases[0] is not None

    @classmethod
    def create(cls, in_dim: int, hidden: Sequence[int], out_dim: int, rng: np.random.Generator,
               *, bias: bool = True) -> "MlpModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
        dims = [in_dim, *hidden, out_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out) if bias else None)
        return cls(weights, biases)

    @classmethod
    def zeros(cls, in_dim: int, hidden: Sequence[int], out_dim: int, *, bias: bool = True) -> "MlpModel":
        dims = [in_dim, *hidden, out_dim]
        weights = [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])]
        biases = [np.zeros(b) if bias else None for b in dims[1:]]
        return cls(weights, biases)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_dims(self) -> list[int]:
        """Widths from input to output, e.g. ``[784, 100, 100, 10]``."""
        return [self.in_dim] + [W.shape[1] for W in self.weights]

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            if b is not None:
                out.append(b)
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights],
                        [None if b is None else b.copy() for b in self.biases],
                        self.activation)


@dataclass(eq=False)
class Tape:
    """Activations cached by a forward pass, bound to one model version."""

    acts: list
    model_id: int
    model_version: int
    meta: dict = field(default_factory=dict)

    @property
    def logits(self) -> np.ndarray:
        return self.acts[-1]


def mlp_forward(m: MlpModel, x) -> tuple[np.ndarray, Tape]:
    x = as_matrix(x, name="input")
    if x.shape[1] != m.in_dim:
        raise DimensionError(f"input dim {x.shape[1]} != model input dim {m.in_dim}")
    acts = kernels.mlp_forward(m.weights, m.biases, x)
    return acts[-1], Tape(acts, id(m), m.version)


def mlp_backward(m: MlpModel, tape: Tape, upstream) -> tuple[ParamGrads, np.ndarray]:
    """Reverse pass for an arbitrary upstream ``dL/dz``.

    Returns parameter gradients aligned with ``m.params()`` (summed over rows)
    and the input gradient.
    """
    if tape.model_id != id(m) or tape.model_version != m.version:
        raise ContractError("tape does not belong to the current model state")
    up = as_matrix(upstream, name="upstream")
    if up.shape != tape.logits.shape:
        raise DimensionError(f"upstream shape {up.shape} != logits shape {tape.logits.shape}")
    wgrads, bgrads, dx = kernels.mlp_backward(m.weights, tape.acts, up)
    grads = []
    for gw, gb in zip(wgrads, bgrads):
        grads.append(gw)
        if m.use_bias:
            grads.append(gb)
    return grads, dx


def sgd_step(m: MlpModel, grads: ParamGrads, eta: float) -> MlpModel:
    """In-place ``theta <- theta - eta * grad``; returns ``m``."""
    if eta < 0:
        raise ConfigError("learning rate must be non-negative")
    params = m.params()
    if len(grads) != len(params):
        raise DimensionError(f"{len(grads)} gradient blocks for {len(params)} parameter blocks")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    if eta == 0:
        return m
    for p, g in zip(params, grads):
        p -= eta * g
    m.version += 1
    return m


def labeled_step_grads(m: MlpModel, x, y) -> tuple[float, ParamGrads, np.ndarray, np.ndarray]:
    """Mean cross-entropy over a batch and its parameter gradients.

    Returns ``(loss, grads, logits, logit_grad)`` where ``logit_grad`` rows are
    the per-sample vanilla gradients (not divided by the batch size).
    """
    z, tape = mlp_forward(m, x)
    labels = _labels(y, z.shape[0], z.shape[1])
    losses, g = kernels.xent_rows(z, labels)
    grads, _ = mlp_backward(m, tape, g / z.shape[0])
    return float(losses.mean()), grads, z, g
