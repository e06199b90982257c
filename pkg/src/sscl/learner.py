"""Gradient learner: a small MLP that maps logits to logit-space gradients.

On labeled steps the learner is fitted so that stepping the logits along its
normalized prediction lowers the cross-entropy. On unlabeled steps its
prediction stands in for the (unknown) loss gradient and is chained into the
classifier exactly like a labeled upstream gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .container import load_arrays, save_arrays
from .errors import ConfigError, DimensionError, ProtocolError
from .mathcore import (
    MlpModel,
    Tape,
    as_matrix,
    cross_entropy,
    grad_cross_entropy,
    mlp_backward,
    mlp_forward,
    sgd_step,
)

EPS_NORM = 1e-12


def normalize(g, tau: float, alpha: float, eps: float = EPS_NORM) -> np.ndarray:
    """Rescale each row of ``g`` to length ``alpha * tau``; rows shorter than ``eps`` become zero."""
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    g = as_matrix(g, name="gradient")
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    ok = norms >= eps
    return np.where(ok, (alpha * tau) * g / np.where(ok, norms, 1.0), 0.0)


def fitness_loss(z, g_bar, y, eta: float, lam: float) -> float:
    """``lam * CE(z - eta * g_bar, y)``, averaged over rows."""
    z = as_matrix(z, name="logits")
    g_bar = as_matrix(g_bar, name="pseudo gradient")
    if z.shape != g_bar.shape:
        raise DimensionError(f"logits {z.shape} and gradient {g_bar.shape} differ in shape")
    return lam * cross_entropy(z - eta * g_bar, y)


def raw_fitness_loss(z, g, y, eta: float) -> float:
    """Unnormalized variant ``CE(z - eta * g, y)``; reported for analysis only."""
    return fitness_loss(z, g, y, eta, 1.0)


@dataclass(eq=False)
class LearnRecord:
    fit_loss: float
    tau: float
    skipped: bool
    g_bar: np.ndarray
    vanilla: np.ndarray


@dataclass(eq=False)
class GradientLearner:
    h: MlpModel
    eta: float
    alpha: float = 0.001
    lam: float = 0.30
    eta_hat: float | None = None
    warmup: int = 50
    straight_through: bool = False
    eps_norm: float = EPS_NORM
    tau_prev: float | None = None
    step_count: int = 0
    skipped_steps: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.h.in_dim != self.h.out_dim:
            raise DimensionError("learner input and output dimensions must both equal the logit dimension")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.eta_hat is None:
            self.eta_hat = self.eta
        if self.eta_hat < 0:
            raise ConfigError("eta_hat must be non-negative")
        if self.warmup < 0:
            raise ConfigError("warmup must be non-negative")

    @classmethod
    def create(cls, num_logits: int, hidden: Sequence[int], rng: np.random.Generator, *, eta: float,
               **kw) -> "GradientLearner":
        return cls(MlpModel.create(num_logits, list(hidden), num_logits, rng), eta, **kw)

    @property
    def num_logits(self) -> int:
        return self.h.in_dim

    def predict_raw(self, z) -> np.ndarray:
        return mlp_forward(self.h, z)[0]

    def learn_step(self, z, y) -> LearnRecord:
        """Fit ``h`` on one labeled batch of (detached) logits.

        ``tau`` is the norm of the batch-mean vanilla logit gradient and is kept
        for later unlabeled predictions.
        """
        z = as_matrix(z, name="logits")
        if z.shape[1] != self.num_logits:
            raise DimensionError(f"logit dim {z.shape[1]} != learner dim {self.num_logits}")
        vanilla = grad_cross_entropy(z, y)
        tau = float(np.linalg.norm(vanilla.mean(axis=0)))
        self.tau_prev = tau
        self.step_count += 1

        g, tape = mlp_forward(self.h, z)
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        live = norms >= self.eps_norm
        g_bar = normalize(g, tau, self.alpha, self.eps_norm)
        shifted = z - self.eta * g_bar
        fit = self.lam * cross_entropy(shifted, y)

        skipped = not live.any()
        if skipped:
            self.skipped_steps += 1
        elif self.eta_hat > 0:
            self._update(g, norms, live, shifted, y, tau, tape)
        return LearnRecord(fit, tau, skipped, g_bar, vanilla)

    def _update(self, g, norms, live, shifted, y, tau, tape: Tape) -> None:
        n = g.shape[0]
        # d fit / d g_bar, per row, for the mean over rows
        d_gbar = (-self.lam * self.eta / n) * grad_cross_entropy(shifted, y)
        safe = np.where(live, norms, 1.0)
        scale = self.alpha * tau / safe
        if self.straight_through:
            d_g = scale * d_gbar
        else:
            # a*tau * (I/|g| - g g^T/|g|^3) applied row-wise
            radial = np.sum(g * d_gbar, axis=1, keepdims=True) / safe ** 2
            d_g = scale * (d_gbar - g * radial)
        d_g = np.where(live, d_g, 0.0)
        grads, _ = mlp_backward(self.h, tape, d_g)
        sgd_step(self.h, grads, self.eta_hat)

    def predict_for_unlabeled(self, z) -> np.ndarray | None:
        """Normalized pseudo gradient for unlabeled logits, or ``None`` during warmup."""
        if self.tau_prev is None:
            raise ProtocolError("no labeled step seen yet; the gradient magnitude is undefined")
        if self.step_count < self.warmup:
            return None
        return normalize(self.predict_raw(z), self.tau_prev, self.alpha, self.eps_norm)

    def copy(self) -> "GradientLearner":
        return GradientLearner(self.h.copy(), self.eta, self.alpha, self.lam, self.eta_hat, self.warmup,
                               self.straight_through, self.eps_norm, self.tau_prev, self.step_count,
                               self.skipped_steps, dict(self.meta))

    def save(self, path) -> Path:
        arrays = {}
        for i, (W, b) in enumerate(zip(self.h.weights, self.h.biases)):
            arrays[f"W{i}"] = W
            if b is not None:
                arrays[f"b{i}"] = b
        meta = {"kind": "gradient_learner", "eta": self.eta, "alpha": self.alpha, "lam": self.lam,
                "eta_hat": self.eta_hat, "warmup": self.warmup, "straight_through": self.straight_through,
                "eps_norm": self.eps_norm, "tau_prev": self.tau_prev, "step_count": self.step_count,
                "skipped_steps": self.skipped_steps, "layers": len(self.h.weights), "meta": self.meta}
        return save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "GradientLearner":
        arrays, meta = load_arrays(path)
        if meta.get("kind") != "gradient_learner":
            raise ConfigError(f"{path}: not a gradient-learner checkpoint")
        n = meta["layers"]
        weights = [arrays[f"W{i}"] for i in range(n)]
        biases = [arrays.get(f"b{i}") for i in range(n)]
        return cls(MlpModel(weights, biases), meta["eta"], meta["alpha"], meta["lam"], meta["eta_hat"],
                   meta["warmup"], meta["straight_through"], meta["eps_norm"], meta["tau_prev"],
                   meta["step_count"], meta["skipped_steps"], meta.get("meta", {}))


def apply_unlabeled_update(model: MlpModel, tape: Tape, g_bar, eta: float) -> MlpModel:
    """Chain a logit-space pseudo gradient into the classifier and take an SGD step.

    Rows are averaged (upstream ``g_bar / B``), mirroring the mean-loss scaling
    of a labeled update, so a true loss gradient reproduces a labeled step.
    """
    g_bar = as_matrix(g_bar, name="pseudo gradient")
    if g_bar.shape != tape.logits.shape:
        raise DimensionError(f"pseudo gradient {g_bar.shape} != logits {tape.logits.shape}")
    grads, _ = mlp_backward(model, tape, g_bar / g_bar.shape[0])
    return sgd_step(model, grads, eta)


NOISE_KINDS = ("uniform", "normal")


def noise_gradient(kind: str, shape, rng: np.random.Generator | int) -> np.ndarray:
    """I.i.d. noise: ``U(-1, 1)`` or ``N(0, 1)``."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    if any(s < 1 for s in shape):
        raise ConfigError("noise dimensions must be positive")
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if kind == "normal":
        return rng.standard_normal(size=shape)
    raise ConfigError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
