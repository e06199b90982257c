"""Teacher-student pseudo-labeling baselines (one-hot and probabilistic)."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, LabelError, ProtocolError
from .mathcore import MlpModel, as_matrix, labeled_step_grads, mlp_backward, mlp_forward, sgd_step

MODES = ("one-hot", "probabilistic")


class TeacherModel:
    """A backbone shaped like the student's hidden stack plus one linear head per task.

    Head ``t`` scores only the classes of task ``t``; predictions are mapped
    back to global class indices.
    """

    def __init__(self, in_dim: int, hidden: Sequence[int], num_classes: int, rng: np.random.Generator):
        if not hidden:
            raise DimensionError("the teacher needs at least one hidden layer to form a backbone")
        trunk = MlpModel.create(in_dim, list(hidden[:-1]), hidden[-1], rng)
        self.backbone_w = trunk.weights
        self.backbone_b = trunk.biases
        self.num_classes = num_classes
        self.feature_dim = hidden[-1]
        self.heads: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._rng = rng

    @classmethod
    def like(cls, student: MlpModel, rng: np.random.Generator) -> "TeacherModel":
        dims = student.layer_dims
        return cls(dims[0], dims[1:-1], dims[-1], rng)

    def add_head(self, t: int, classes) -> None:
        classes = np.asarray(classes, dtype=np.int64)
        if classes.size == 0 or classes.min() < 0 or classes.max() >= self.num_classes:
            raise LabelError(f"task {t} classes outside [0, {self.num_classes})")
        head = MlpModel.create(self.feature_dim, [], classes.size, self._rng)
        self.heads[int(t)] = (head.weights[0], head.biases[0], classes)

    def model_for(self, t: int) -> MlpModel:
        """Backbone plus head ``t`` as one network; parameters are shared, not copied."""
        if t not in self.heads:
            raise ProtocolError(f"teacher has no head for task {t}")
        W, b, _ = self.heads[t]
        return MlpModel(self.backbone_w + [W], self.backbone_b + [b])

    def param_count(self) -> int:
        trunk = sum(W.size + b.size for W, b in zip(self.backbone_w, self.backbone_b))
        return trunk + sum(W.size + b.size for W, b, _ in self.heads.values())


def _local_labels(classes: np.ndarray, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    pos = np.searchsorted(classes, y)
    pos = np.clip(pos, 0, classes.size - 1)
    if not np.array_equal(classes[pos], y):
        raise LabelError("label not among the task's classes")
    return pos


def train_teacher_step(teacher: TeacherModel, x, y, t: int, eta: float, classes=None) -> float:
    """One SGD step on cross-entropy through the backbone and head ``t``.

    A head is created on first sight of a task; ``classes`` then defaults to all classes.
    """
    t = int(t)
    if t not in teacher.heads:
        teacher.add_head(t, np.arange(teacher.num_classes) if classes is None else np.sort(classes))
    model = teacher.model_for(t)
    loss, grads, _, _ = labeled_step_grads(model, x, _local_labels(teacher.heads[t][2], y))
    sgd_step(model, grads, eta)
    return loss


def predict_pseudo_label(teacher: TeacherModel, x, t: int, mode: str = "one-hot") -> np.ndarray:
    """Global class indices (one-hot mode) or ``(B, num_classes)`` distributions.

    Argmax ties resolve to the lowest class index.
    """
    if mode not in MODES:
        raise ValueError(f"unknown pseudo-label mode {mode!r}")
    z, _ = mlp_forward(teacher.model_for(int(t)), x)
    classes = teacher.heads[int(t)][2]
    if mode == "one-hot":
        return classes[np.argmax(z, axis=1)]
    out = np.zeros((z.shape[0], teacher.num_classes))
    out[:, classes] = kernels.softmax_rows(z)
    return out


def soft_cross_entropy(z, target) -> tuple[float, np.ndarray]:
    """Mean cross-entropy against soft targets and the per-row logit gradient."""
    z = as_matrix(z, name="logits")
    target = as_matrix(target, name="target")
    if z.shape != target.shape:
        raise DimensionError(f"logits {z.shape} and targets {target.shape} differ in shape")
    losses, grad = kernels.soft_xent_rows(z, target)
    return float(losses.mean()), grad


def student_update_with_pseudo(model: MlpModel, x, pseudo, eta: float) -> float:
    """Supervised step against pseudo labels; returns the loss before the step.

    Integer labels give a hard-label step; a 2-D array is read as soft targets.
    """
    pseudo = np.asarray(pseudo)
    if pseudo.ndim == 2 and np.issubdtype(pseudo.dtype, np.floating):
        z, tape = mlp_forward(model, x)
        loss, grad = soft_cross_entropy(z, pseudo)
        grads, _ = mlp_backward(model, tape, grad / z.shape[0])
    else:
        loss, grads, _, _ = labeled_step_grads(model, x, pseudo)
    sgd_step(model, grads, eta)
    return loss
