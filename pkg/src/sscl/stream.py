"""Synthetic task streams, unlabeled pools and the unlabeled sampling gate."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .container import load_arrays, read_idx, save_arrays
from .errors import ConfigError

TRANSFORM_KINDS = ("none", "permutation", "rotation", "split")


@dataclass(eq=False)
class Dataset:
    """Labeled train/test arrays; ``means`` is set for synthetic data only."""

    x: np.ndarray
    y: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    means: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def save(self, path, meta: dict | None = None):
        arrays = {"x": self.x, "y": self.y, "x_test": self.x_test, "y_test": self.y_test}
        if self.means is not None:
            arrays["means"] = self.means
        return save_arrays(path, arrays, {"num_classes": self.num_classes, **(meta or {})})

    @classmethod
    def load(cls, path) -> "Dataset":
        arrays, meta = load_arrays(path)
        return cls(arrays["x"], arrays["y"].astype(np.int64), arrays["x_test"],
                   arrays["y_test"].astype(np.int64), int(meta["num_classes"]), arrays.get("means"))


def _unit_rows(rng, n, dim):
    d = rng.normal(size=(n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def make_synthetic_dataset(num_classes: int, dim: int, samples_per_class: int, seed: int, *,
                           radius: float = 4.0, test_per_class: int | None = None) -> Dataset:
    """Gaussian clusters: class means on a sphere of ``radius``, unit isotropic noise.

    Mean directions are drawn before anything else, so they depend on the seed
    only (not on ``radius`` or the sample counts).
    """
    if min(num_classes, dim, samples_per_class) < 1:
        raise ConfigError("num_classes, dim and samples_per_class must be positive")
    test_per_class = samples_per_class if test_per_class is None else test_per_class
    rng = np.random.default_rng(seed)
    means = radius * _unit_rows(rng, num_classes, dim)
    y = np.repeat(np.arange(num_classes), samples_per_class)
    x = means[y] + rng.normal(size=(y.size, dim))
    y_test = np.repeat(np.arange(num_classes), test_per_class)
    x_test = means[y_test] + rng.normal(size=(y_test.size, dim))
    return Dataset(x, y, x_test, y_test, num_classes, means)


def load_idx_dataset(train_images, train_labels, test_images, test_labels, *, scale=1 / 255.0) -> Dataset:
    """Real digit data (IDX files) behind the same interface; images are flattened."""
    x = read_idx(train_images)
    xt = read_idx(test_images)
    x = x.reshape(x.shape[0], -1).astype(np.float64) * scale
    xt = xt.reshape(xt.shape[0], -1).astype(np.float64) * scale
    y = read_idx(train_labels).astype(np.int64)
    yt = read_idx(test_labels).astype(np.int64)
    return Dataset(x, y, xt, yt, int(max(y.max(), yt.max())) + 1)


@dataclass(eq=False)
class Task:
    index: int
    classes: np.ndarray
    x: np.ndarray
    y: np.ndarray
    source_index: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    transform: np.ndarray | None = None

    def apply_transform(self, x: np.ndarray) -> np.ndarray:
        """Map source-space inputs into this task's input space."""
        if self.transform is None:
            return x
        if self.transform.ndim == 1:
            return np.ascontiguousarray(x[:, self.transform])
        return x @ self.transform


@dataclass(eq=False)
class Continuum:
    """Ordered labeled tasks. ``kind == "split"`` means per-task class masking at evaluation."""

    tasks: list
    kind: str
    num_classes: int

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def dim(self) -> int:
        return self.tasks[0].x.shape[1]

    def eval_classes(self, t: int):
        return self.tasks[t].classes if self.kind == "split" else None

    def test_sets(self):
        return [(task.x_test, task.y_test, self.eval_classes(task.index)) for task in self.tasks]

    def batches(self, t: int, batch_size: int, rng: np.random.Generator,
                epochs: int = 1) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(x, y, source_index)`` mini-batches of task ``t``.

        With ``epochs == 1`` every sample of the task is seen exactly once.
        """
        task = self.tasks[t]
        n = task.y.size
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                yield task.x[idx], task.y[idx], task.source_index[idx]


def _stratified_chunks(y, num_tasks, rng):
    chunks = [[] for _ in range(num_tasks)]
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        for t, part in enumerate(np.array_split(idx, num_tasks)):
            chunks[t].append(part)
    return [np.sort(np.concatenate(parts)) for parts in chunks]


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def make_transform_tasks(dataset: Dataset, num_tasks: int, kind: str, seed: int) -> Continuum:
    """Permuted or rotated copies of one label space; task 0 is untransformed.

    Training samples are split (stratified) across tasks so each appears once;
    every task is tested on the full test set under its own transform.
    """
    if kind not in ("permutation", "rotation"):
        raise ConfigError(f"unknown transform kind {kind!r}")
    if num_tasks < 2:
        raise ConfigError("a continuum needs at least two tasks")
    rng = np.random.default_rng(seed)
    dim = dataset.dim
    chunks = _stratified_chunks(dataset.y, num_tasks, rng)
    classes = np.arange(dataset.num_classes)
    tasks = []
    for t in range(num_tasks):
        idx = chunks[t]
        if kind == "permutation":
            perm = np.arange(dim) if t == 0 else rng.permutation(dim)
            apply = lambda a, perm=perm: np.ascontiguousarray(a[:, perm])  # noqa: E731
            transform = perm
        else:
            Q = np.eye(dim) if t == 0 else random_orthogonal(dim, rng)
            apply = lambda a, Q=Q: a @ Q  # noqa: E731
            transform = Q
        tasks.append(Task(t, classes, apply(dataset.x[idx]), dataset.y[idx], idx,
                          apply(dataset.x_test), dataset.y_test.copy(), transform))
    return Continuum(tasks, kind, dataset.num_classes)


def make_split_tasks(dataset: Dataset, num_tasks: int, seed: int) -> Continuum:
    """Disjoint class partition: task ``t`` holds only its own classes."""
    if num_tasks < 2:
        raise ConfigError("a continuum needs at least two tasks")
    if dataset.num_classes % num_tasks:
        raise ConfigError(f"{dataset.num_classes} classes do not split into {num_tasks} tasks")
    rng = np.random.default_rng(seed)
    cells = np.sort(rng.permutation(dataset.num_classes).reshape(num_tasks, -1), axis=1)
    tasks = []
    for t, cls in enumerate(cells):
        idx = np.flatnonzero(np.isin(dataset.y, cls))
        tidx = np.flatnonzero(np.isin(dataset.y_test, cls))
        tasks.append(Task(t, cls, dataset.x[idx], dataset.y[idx], idx,
                          dataset.x_test[tidx], dataset.y_test[tidx]))
    return Continuum(tasks, "split", dataset.num_classes)


@dataclass(frozen=True)
class TaskStreamConfig:
    num_tasks: int = 5
    classes_per_task: int = 10
    samples_per_class: int = 50
    transform_kind: str = "permutation"
    epochs: int = 1
    dim: int = 20
    radius: float = 4.0
    test_per_class: int = 50
    batch_size: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_tasks < 2:
            raise ConfigError("num_tasks must be at least 2")
        if self.transform_kind not in TRANSFORM_KINDS:
            raise ConfigError(f"transform_kind must be one of {TRANSFORM_KINDS}")
        if min(self.classes_per_task, self.samples_per_class, self.epochs, self.dim,
               self.test_per_class, self.batch_size) < 1:
            raise ConfigError("stream counts must be positive")

    @property
    def one_pass(self) -> bool:
        return self.epochs == 1

    @property
    def num_classes(self) -> int:
        if self.transform_kind == "split":
            return self.classes_per_task * self.num_tasks
        return self.classes_per_task

    def to_dict(self) -> dict:
        return asdict(self)


def build_continuum(cfg: TaskStreamConfig, seed: int) -> tuple[Dataset, Continuum]:
    """Generate the source dataset and task split for run seed ``seed``."""
    ss = np.random.SeedSequence([cfg.rng_seed, seed])
    data_seed, split_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    per_class = cfg.samples_per_class
    if cfg.transform_kind in ("permutation", "rotation", "none"):
        per_class *= cfg.num_tasks
    data = make_synthetic_dataset(cfg.num_classes, cfg.dim, per_class, data_seed,
                                  radius=cfg.radius, test_per_class=cfg.test_per_class)
    if cfg.transform_kind == "split":
        cont = make_split_tasks(data, cfg.num_tasks, split_seed)
    elif cfg.transform_kind == "none":
        cont = make_transform_tasks(data, cfg.num_tasks, "permutation", split_seed)
        for task in cont.tasks:
            task.x = data.x[task.source_index]
            task.x_test = data.x_test.copy()
            task.transform = None
        cont.kind = "none"
    else:
        cont = make_transform_tasks(data, cfg.num_tasks, cfg.transform_kind, split_seed)
    return data, cont


@dataclass(eq=False)
class UnlabeledPool:
    x: np.ndarray
    source_tag: np.ndarray
    novel_means: np.ndarray | None = None

    def __len__(self) -> int:
        return self.x.shape[0]


def make_unlabeled_pool(kind: str, size: int, dim: int, seed: int, overlap: float = 0.5, *,
                        means: np.ndarray | None = None, radius: float = 4.0,
                        novel_classes: int = 10) -> UnlabeledPool:
    """Pool of unlabeled inputs.

    ``kind="mixture"``: each sample comes, with probability ``overlap``, from a
    labeled class cluster in ``means`` (label dropped, tag ``"known"``), and
    otherwise from one of ``novel_classes`` fresh clusters (tag ``"novel"``).
    ``kind="noise"``: standard normal inputs tagged ``"noise"``.
    """
    if not 0.0 <= overlap <= 1.0:
        raise ConfigError("overlap must lie in [0, 1]")
    if size < 1:
        raise ConfigError("pool size must be positive")
    rng = np.random.default_rng(seed)
    if kind == "noise":
        return UnlabeledPool(rng.normal(size=(size, dim)), np.full(size, "noise"))
    if kind != "mixture":
        raise ConfigError(f"unknown pool kind {kind!r}")
    if means is None or means.shape[1] != dim:
        raise ConfigError("mixture pools need labeled class means of matching dimension")
    novel = radius * _unit_rows(rng, novel_classes, dim)
    known = rng.random(size) < overlap
    centers = np.where(known[:, None],
                       means[rng.integers(0, means.shape[0], size)],
                       novel[rng.integers(0, novel_classes, size)])
    x = centers + rng.normal(size=(size, dim))
    return UnlabeledPool(x, np.where(known, "known", "novel"), novel)


@dataclass(frozen=True)
class SamplingPolicy:
    p: float = 0.15
    unlabeled_batch: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        if self.unlabeled_batch < 1:
            raise ConfigError("unlabeled_batch must be at least 1")


@dataclass(eq=False)
class UnlabeledBatch:
    x: np.ndarray
    source_tag: np.ndarray
    indices: np.ndarray


class UnlabeledSampler:
    """Stateful gate ``q ~ U(0,1), draw iff q < p``.

    The gate and the index picker use separate generators and the gate consumes
    exactly one variate per call, so the sequence of gate outcomes for two
    policies with the same seed is nested in ``p``. Draws are with replacement.
    """

    def __init__(self, policy: SamplingPolicy, pool: UnlabeledPool):
        if len(pool) == 0:
            raise ConfigError("unlabeled pool is empty")
        self.policy = policy
        self.pool = pool
        gate_ss, pick_ss = np.random.SeedSequence(policy.rng_seed).spawn(2)
        self._gate = np.random.default_rng(gate_ss)
        self._pick = np.random.default_rng(pick_ss)
        self.calls = 0
        self.draws = 0

    def draw(self) -> UnlabeledBatch | None:
        self.calls += 1
        q = self._gate.random()
        if not q < self.policy.p:
            return None
        self.draws += 1
        idx = self._pick.integers(0, len(self.pool), self.policy.unlabeled_batch)
        return UnlabeledBatch(self.pool.x[idx], self.pool.source_tag[idx], idx)


def draw_unlabeled(sampler: UnlabeledSampler) -> UnlabeledBatch | None:
    return sampler.draw()
