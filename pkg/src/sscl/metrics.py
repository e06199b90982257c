"""Accuracy matrix, transfer metrics, cosine diagnostics and CSV export."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ProtocolError, UndefinedMetricError
from .mathcore import MlpModel, mlp_forward


@dataclass(eq=False)
class ResultMatrix:
    """``R[i, j]``: accuracy on task ``j`` after training through task ``i``; NaN until filled.

    ``baseline`` holds each task's accuracy under a freshly initialized model.
    """

    R: np.ndarray
    baseline: np.ndarray | None = None

    @classmethod
    def empty(cls, num_tasks: int) -> "ResultMatrix":
        return cls(np.full((num_tasks, num_tasks), np.nan))

    @property
    def num_tasks(self) -> int:
        return self.R.shape[0]

    def set_row(self, i: int, row) -> None:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.num_tasks,):
            raise DimensionError(f"row of length {row.size} for {self.num_tasks} tasks")
        if np.any((row < 0) | (row > 1)):
            raise ValueError("accuracies must lie in [0, 1]")
        self.R[i] = row

    @property
    def complete(self) -> bool:
        return not np.isnan(self.R).any()


def evaluate_all_tasks(model: MlpModel, test_sets, task_masking: bool = True) -> np.ndarray:
    """Test accuracy on every task, one entry per ``(x, y, classes)`` triple.

    With masking on, logits outside ``classes`` are excluded from the argmax;
    ``classes=None`` means the full head. The model is only read.
    """
    row = []
    for t, (x, y, classes) in enumerate(test_sets):
        y = np.asarray(y)
        if y.size == 0:
            raise ProtocolError(f"task {t} has an empty test set")
        z, _ = mlp_forward(model, x)
        if task_masking and classes is not None:
            masked = np.full_like(z, -np.inf)
            masked[:, classes] = z[:, classes]
            z = masked
        row.append(float(np.mean(np.argmax(z, axis=1) == y)))
    return np.array(row)


def _check_square(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionError(f"result matrix must be square, got {R.shape}")
    return R


def acc(R) -> float:
    """Mean accuracy over all tasks after the final task."""
    R = _check_square(R)
    return float(R[-1].mean())


def bwt(R) -> float:
    """Mean change on earlier tasks between learning them and the end of the stream."""
    R = _check_square(R)
    T = R.shape[0]
    if T < 2:
        raise UndefinedMetricError("backward transfer needs at least two tasks")
    return float(np.mean(R[-1, :-1] - np.diag(R)[:-1]))


def fwt(R, baseline) -> float:
    """Mean accuracy on each task just before it is learned, relative to the untrained baseline."""
    R = _check_square(R)
    T = R.shape[0]
    if T < 2:
        raise UndefinedMetricError("forward transfer needs at least two tasks")
    if baseline is None:
        raise UndefinedMetricError("forward transfer needs baseline accuracies")
    b = np.asarray(baseline, dtype=np.float64)
    if b.shape != (T,) or np.isnan(b[1:]).any():
        raise UndefinedMetricError("baseline accuracies missing for some tasks")
    return float(np.mean(np.diag(R, k=1) - b[1:]))


def cosine_similarity(a, b) -> float:
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionError(f"vectors of length {a.size} and {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedMetricError("cosine similarity of a zero vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def export_confusion(R, path=None) -> str:
    """CSV text of ``R`` with task indices on the header row and first column.

    Values carry 12 significant digits; written to ``path`` when given.
    """
    R = _check_square(R)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["task"] + [str(j) for j in range(R.shape[1])])
    for i, row in enumerate(R):
        w.writerow([str(i)] + [_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_bytes(text.encode("ascii"))
    return text


def load_confusion(source) -> np.ndarray:
    """Parse a CSV written by :func:`export_confusion` (path or text)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        source = Path(source).read_text()
    rows = list(csv.reader(io.StringIO(source)))
    header, body = rows[0], rows[1:]
    T = len(header) - 1
    if header[0] != "task" or [int(h) for h in header[1:]] != list(range(T)) or len(body) != T:
        raise ValueError("not a task-indexed square confusion table")
    out = np.empty((T, T))
    for i, row in enumerate(body):
        if int(row[0]) != i or len(row) != T + 1:
            raise ValueError(f"malformed row {i}")
        out[i] = [float(v) for v in row[1:]]
    return out
