"""Supervised continual-learning strategies: plain SGD, GEM projection, DCL alignment."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, ProtocolError
from .mathcore import MlpModel, labeled_step_grads, sgd_step


def flatten_grads(grads) -> np.ndarray:
    """Concatenate parameter blocks in their canonical (``MlpModel.params``) order."""
    return np.concatenate([np.ravel(g) for g in grads])


def unflatten_grads(flat: np.ndarray, template) -> list:
    """Inverse of :func:`flatten_grads`; ``template`` supplies the block shapes."""
    shapes = [np.shape(t) for t in template]
    total = sum(int(np.prod(s)) for s in shapes)
    if flat.ndim != 1 or flat.size != total:
        raise ContractError(f"flat gradient of size {flat.size} does not match {total} parameters")
    out, off = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(flat[off:off + n].reshape(s))
        off += n
    return out


@dataclass(frozen=True)
class ProjectionConfig:
    margin: float = 0.0
    qp_max_iters: int = 20000
    qp_tolerance: float = 1e-10
    polish: bool = True

    def __post_init__(self):
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        if self.qp_tolerance <= 0:
            raise ConfigError("qp_tolerance must be positive")
        if self.qp_max_iters < 1:
            raise ConfigError("qp_max_iters must be positive")


@dataclass(eq=False)
class ProjectionResult:
    g: np.ndarray
    projected: bool
    converged: bool = True
    iterations: int = 0
    dual: np.ndarray | None = None


def _dual_residual(P, q, v):
    grad = P @ v + q
    return float(np.max(np.abs(v - np.maximum(v - grad, 0.0)))) if v.size else 0.0


def _solve_free(P, q, free):
    s = np.zeros_like(q)
    idx = np.flatnonzero(free)
    if idx.size:
        s[idx] = np.linalg.lstsq(P[np.ix_(idx, idx)], -q[idx], rcond=None)[0]
    return s


def _active_set_polish(P, q, v, tol):
    """Lawson-Hanson active-set iterations on the dual, warm-started from ``v``."""
    k = q.size
    free = v > 0.0
    v = np.where(free, v, 0.0)
    for _ in range(3 * k + 3):
        # inner loop: move toward the free-set minimizer without leaving v >= 0
        for _ in range(k + 1):
            s = _solve_free(P, q, free)
            bad = free & (s <= 0.0)
            if not bad.any():
                v = s
                break
            ratio = v[bad] / (v[bad] - s[bad])
            v = v + float(ratio.min()) * (s - v)
            free &= v > 0.0
            v = np.where(free, v, 0.0)
        w = -(P @ v + q)
        w[free] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            break
        free[j] = True
    return v


def gem_project(g: np.ndarray, G: np.ndarray, cfg: ProjectionConfig = ProjectionConfig()) -> ProjectionResult:
    """Closest gradient to ``g`` whose inner product with every row of ``G`` is >= margin.

    Solved in the dual ``min 1/2 v'GG'v + (Gg - margin)'v, v >= 0`` by projected
    gradient with step ``1/lambda_max(GG')``. Unless ``cfg.polish`` is off, the
    iterate is then refined by active-set steps, which terminate exactly where
    plain projected gradient crawls (nearly parallel constraints). Feasible
    inputs come back unchanged.
    """
    g = np.asarray(g, dtype=np.float64)
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    if G.size == 0 or G.shape[0] == 0:
        return ProjectionResult(g, False)
    if G.shape[1] != g.size:
        raise ContractError(f"memory gradients have {G.shape[1]} entries, gradient has {g.size}")
    q = G @ g - cfg.margin
    if np.all(q >= 0.0):
        return ProjectionResult(g, False)
    # unit-norm rows: same feasible set, unit-diagonal dual, tolerance in gradient units
    norms = np.linalg.norm(G, axis=1)
    live = norms > 0.0
    if not np.all(q[~live] >= 0.0):
        # a zero memory gradient cannot meet a positive margin
        return ProjectionResult(g, False, converged=False)
    Gs = G[live] / norms[live, None]
    qs = q[live] / norms[live]
    P = np.ascontiguousarray(Gs @ Gs.T)
    lmax = float(np.linalg.eigvalsh(P)[-1])
    vs, iters, ok = kernels.qp_dual_pg(P, np.ascontiguousarray(qs), 1.0 / lmax,
                                       cfg.qp_max_iters, cfg.qp_tolerance)
    vs = np.asarray(vs)
    if cfg.polish:
        refined = _active_set_polish(P, qs, vs, cfg.qp_tolerance)
        if _dual_residual(P, qs, refined) <= _dual_residual(P, qs, vs):
            vs = refined
    ok = bool(ok) or _dual_residual(P, qs, vs) < cfg.qp_tolerance
    v = np.zeros_like(q)
    v[live] = vs / norms[live]
    return ProjectionResult(g + Gs.T @ vs, True, ok, int(iters), v)


@dataclass(eq=False)
class AccumulatorState:
    g_acc: np.ndarray | None = None
    decay: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")


def dcl_align(g: np.ndarray, acc: AccumulatorState) -> np.ndarray:
    """Remove the component of ``g`` that opposes the accumulated gradient.

    Updates ``acc`` in place: ``g_acc <- decay * g_acc + g'``.
    """
    g = np.asarray(g, dtype=np.float64)
    a = acc.g_acc
    out = g
    if a is not None:
        dot = float(g @ a)
        nrm2 = float(a @ a)
        if dot < 0.0 and nrm2 > 0.0:
            out = g - (dot / nrm2) * a
    acc.g_acc = out.copy() if a is None else acc.decay * a + out
    return out


class EpisodicMemory:
    """Per-task FIFO buffers of ``(x, y)`` pairs."""

    def __init__(self, budget_per_task: int):
        if budget_per_task < 1:
            raise ConfigError("memory budget must be positive")
        self.budget_per_task = budget_per_task
        self.buffers: dict[int, deque] = {}

    def add(self, t: int, x: np.ndarray, y: np.ndarray) -> None:
        buf = self.buffers.setdefault(int(t), deque(maxlen=self.budget_per_task))
        for row, label in zip(np.atleast_2d(x), np.atleast_1d(y)):
            buf.append((row.copy(), int(label)))

    def tasks(self) -> list[int]:
        return sorted(self.buffers)

    def batch(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        buf = self.buffers[t]
        return np.array([r for r, _ in buf]), np.array([l for _, l in buf], dtype=np.int64)

    def __len__(self) -> int:
        return sum(len(b) for b in self.buffers.values())


def memory_update(mem: EpisodicMemory, t: int, x, y) -> EpisodicMemory:
    mem.add(t, x, y)
    return mem


def memory_gradients(model: MlpModel, mem: EpisodicMemory, current_task: int) -> tuple[np.ndarray, list[int]]:
    """One row per past task with a non-empty buffer: gradient of its mean buffer loss."""
    rows, tasks = [], []
    for t in mem.tasks():
        if t >= current_task or not mem.buffers[t]:
            continue
        x, y = mem.batch(t)
        _, grads, _, _ = labeled_step_grads(model, x, y)
        rows.append(flatten_grads(grads))
        tasks.append(t)
    if not rows:
        return np.zeros((0, sum(p.size for p in model.params()))), tasks
    return np.vstack(rows), tasks


@dataclass(eq=False)
class StepRecord:
    task: int
    loss: float
    logits: np.ndarray
    logit_grad: np.ndarray
    tau: float
    projected: bool = False
    qp_converged: bool = True


class PlainSGD:
    name = "plain"

    def transform(self, model: MlpModel, flat: np.ndarray, t: int) -> tuple[np.ndarray, bool, bool]:
        return flat, False, True

    def after_step(self, t: int, x, y) -> None:
        pass


class GEM(PlainSGD):
    name = "gem"

    def __init__(self, budget_per_task: int = 50, projection: ProjectionConfig = ProjectionConfig()):
        self.memory = EpisodicMemory(budget_per_task)
        self.projection = projection

    def transform(self, model, flat, t):
        G, _ = memory_gradients(model, self.memory, t)
        res = gem_project(flat, G, self.projection)
        return res.g, res.projected, res.converged

    def after_step(self, t, x, y):
        self.memory.add(t, x, y)


class DCL(PlainSGD):
    name = "dcl"

    def __init__(self, decay: float = 0.9):
        self.acc = AccumulatorState(decay=decay)

    def transform(self, model, flat, t):
        out = dcl_align(flat, self.acc)
        return out, out is not flat, True


def make_strategy(name: str, *, memory_budget: int = 50, projection: ProjectionConfig = ProjectionConfig(),
                  dcl_decay: float = 0.9) -> PlainSGD:
    if name == "plain":
        return PlainSGD()
    if name == "gem":
        return GEM(memory_budget, projection)
    if name == "dcl":
        return DCL(dcl_decay)
    raise ConfigError(f"unknown strategy {name!r}")


def observe_labeled(strategy: PlainSGD, model: MlpModel, x, y, t, eta: float) -> StepRecord:
    """One labeled update: vanilla gradient, strategy transform, SGD, memory append.

    ``t`` may be an int or a per-sample array that must hold a single task id.
    """
    tasks = np.unique(np.atleast_1d(t))
    if tasks.size != 1:
        raise ProtocolError(f"labeled batch mixes tasks {tasks.tolist()}")
    task = int(tasks[0])
    if np.size(y) == 0:
        raise ProtocolError("empty labeled batch")
    loss, grads, z, g = labeled_step_grads(model, x, y)
    projected, converged = False, True
    if not isinstance(strategy, (GEM, DCL)):
        step_grads = grads
    else:
        flat = flatten_grads(grads)
        new, projected, converged = strategy.transform(model, flat, task)
        step_grads = unflatten_grads(new, grads) if new is not flat else grads
    sgd_step(model, step_grads, eta)
    strategy.after_step(task, x, y)
    tau = float(np.linalg.norm(g.mean(axis=0)))
    return StepRecord(task, loss, z, g, tau, projected, converged)
