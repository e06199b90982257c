"""Training loop: labeled updates interleaved with gated unlabeled updates, per seed."""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..continual import make_strategy, observe_labeled
from ..errors import ConfigError, SSCLError, UndefinedMetricError
from ..learner import GradientLearner, apply_unlabeled_update, noise_gradient, normalize
from ..mathcore import MlpModel, grad_cross_entropy, mlp_forward
from ..metrics import ResultMatrix, acc, bwt, cosine_similarity, evaluate_all_tasks, fwt
from ..pseudo import TeacherModel, predict_pseudo_label, student_update_with_pseudo, train_teacher_step
from ..stream import UnlabeledSampler, build_continuum, make_unlabeled_pool
from .config import ExperimentConfig

_STREAMS = ("order", "model", "learner", "teacher", "gate", "pool", "noise")


def _rngs(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return dict(zip(_STREAMS, children))


@dataclass(eq=False)
class RunRecord:
    config: dict
    config_hash: str
    seed: int
    R: list
    baseline: list
    metrics: dict
    curves: dict
    trace: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self, with_trace: bool = False) -> dict:
        d = {k: getattr(self, k) for k in ("config", "config_hash", "seed", "R", "baseline", "metrics",
                                            "curves", "counts", "notes", "wall_clock")}
        if with_trace:
            d["trace"] = self.trace
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(d["config"], d["config_hash"], d["seed"], d["R"], d["baseline"], d["metrics"], d["curves"],
                   d.get("trace", []), d.get("counts", {}), d.get("notes", {}), d.get("wall_clock", 0.0))

    def fingerprint(self) -> dict:
        """Everything except wall-clock time."""
        d = self.to_dict(with_trace=True)
        d.pop("wall_clock")
        return d


def _mean_cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    vals = []
    for u, v in zip(a, b):
        try:
            vals.append(cosine_similarity(u, v))
        except UndefinedMetricError:
            pass
    return float(np.mean(vals)) if vals else None


def _metrics(R: np.ndarray, baseline: np.ndarray) -> dict:
    out = {"acc": acc(R)}
    try:
        out["bwt"] = bwt(R)
        out["fwt"] = fwt(R, baseline)
    except UndefinedMetricError:
        out["bwt"] = out["fwt"] = None
    return out


def run_experiment(cfg: ExperimentConfig, seed: int, *, keep_trace: bool = True) -> RunRecord:
    """Train one seed through the whole stream and evaluate after every task."""
    start = time.perf_counter()
    streams = _rngs(seed)
    order_rng = np.random.default_rng(streams["order"])
    noise_rng = np.random.default_rng(streams["noise"])
    data, cont = build_continuum(cfg.stream, seed)
    K = cont.num_classes
    T = cont.num_tasks
    test_sets = cont.test_sets()

    model = MlpModel.create(cont.dim, list(cfg.hidden), K, np.random.default_rng(streams["model"]))
    baseline = evaluate_all_tasks(model, test_sets)
    strategy = make_strategy(cfg.strategy, memory_budget=cfg.memory_budget, projection=cfg.projection,
                             dcl_decay=cfg.dcl_decay)
    method = cfg.method
    learner = None
    if method == "grad-learner":
        lc = cfg.learner
        learner = GradientLearner.create(K, lc.hidden, np.random.default_rng(streams["learner"]), eta=cfg.eta,
                                         alpha=lc.alpha, lam=lc.lam, eta_hat=lc.eta_hat, warmup=lc.warmup,
                                         straight_through=lc.straight_through)
    teacher = None
    if method in ("1-PL", "P-PL"):
        teacher = TeacherModel.like(model, np.random.default_rng(streams["teacher"]))

    pool_seed = int(streams["pool"].generate_state(1)[0])
    pool = make_unlabeled_pool(cfg.pool.kind, cfg.pool.size, cont.dim, pool_seed, cfg.pool.overlap,
                               means=data.means, radius=cfg.stream.radius)
    gate_seed = int(streams["gate"].generate_state(1)[0])
    sampler = UnlabeledSampler(replace(cfg.policy, rng_seed=gate_seed), pool)

    rm = ResultMatrix.empty(T)
    rm.baseline = baseline
    trace: list = []
    curves = {"task_loss": [], "task_fit_loss": [], "task_acc": [], "periodic": []}
    labeled_steps = applied = 0
    last_tau = 0.0
    for t in range(T):
        task = cont.tasks[t]
        losses, fits = [], []
        for x, y, _ in cont.batches(t, cfg.stream.batch_size, order_rng, cfg.stream.epochs):
            rec = observe_labeled(strategy, model, x, y, t, cfg.eta)
            labeled_steps += 1
            last_tau = rec.tau
            losses.append(rec.loss)
            entry = {"step": len(trace), "task": t, "kind": "labeled", "loss": rec.loss, "tau": rec.tau,
                     "fit_loss": None, "cos": None, "projected": rec.projected}
            if learner is not None:
                lr = learner.learn_step(rec.logits, y)
                fits.append(lr.fit_loss)
                entry["fit_loss"] = lr.fit_loss
                entry["cos"] = _mean_cosine(lr.g_bar, lr.vanilla)
            if teacher is not None:
                train_teacher_step(teacher, x, y, t, cfg.eta, classes=task.classes)
                y_hat = predict_pseudo_label(teacher, x, t, "one-hot")
                entry["cos"] = _mean_cosine(grad_cross_entropy(rec.logits, y), grad_cross_entropy(rec.logits, y_hat))
            trace.append(entry)
            if cfg.eval_every and labeled_steps % cfg.eval_every == 0:
                curves["periodic"].append([labeled_steps, t, evaluate_all_tasks(model, test_sets).tolist()])

            batch = sampler.draw()
            if batch is None:
                continue
            active = method != "none" and labeled_steps >= cfg.learner.warmup
            if active:
                x_u = task.apply_transform(batch.x)
                _unlabeled_step(method, model, x_u, t, cfg, learner, teacher, last_tau, noise_rng)
                applied += 1
            trace.append({"step": len(trace), "task": t, "kind": "unlabeled", "applied": active,
                          "known": int(np.sum(batch.source_tag == "known"))})
        row = evaluate_all_tasks(model, test_sets)
        rm.set_row(t, row)
        curves["task_loss"].append(float(np.mean(losses)))
        curves["task_fit_loss"].append(float(np.mean(fits)) if fits else None)
        curves["task_acc"].append(float(np.mean(row[:t + 1])))

    notes = {"unlabeled_draws": "uniform with replacement"}
    if cfg.strategy == "dcl":
        notes["dcl"] = "alignment rule is a reconstruction"
    counts = {"labeled_steps": labeled_steps, "unlabeled_draws": sampler.draws, "unlabeled_applied": applied}
    if learner is not None:
        counts["learner_skipped_steps"] = learner.skipped_steps
    return RunRecord(cfg.to_dict(), cfg.config_hash(), int(seed), rm.R.tolist(), baseline.tolist(),
                     _metrics(rm.R, baseline), curves, trace if keep_trace else [], counts, notes,
                     time.perf_counter() - start)


def _unlabeled_step(method, model, x_u, t, cfg, learner, teacher, tau, noise_rng) -> None:
    if method in ("1-PL", "P-PL"):
        mode = "one-hot" if method == "1-PL" else "probabilistic"
        student_update_with_pseudo(model, x_u, predict_pseudo_label(teacher, x_u, t, mode), cfg.eta)
        return
    z, tape = mlp_forward(model, x_u)
    if method == "grad-learner":
        g_bar = learner.predict_for_unlabeled(z)
    else:
        kind = "uniform" if method.startswith("noise-uniform") else "normal"
        g_bar = noise_gradient(kind, z.shape, noise_rng)
        if method.endswith("-normalized"):
            g_bar = normalize(g_bar, tau, cfg.learner.alpha)
    apply_unlabeled_update(model, tape, g_bar, cfg.eta)


# -- sweeps -------------------------------------------------------------------

def worker_count(jobs: int) -> int:
    env = os.environ.get("SSCL_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"SSCL_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError("SSCL_THREADS must be positive")
    return max(1, min(cap, jobs))


def _job(args):
    cfg, seed, keep_trace = args
    try:
        return run_experiment(cfg, seed, keep_trace=keep_trace), None
    except SSCLError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_many(jobs: list, keep_trace: bool = True) -> list:
    """Run ``(cfg, seed)`` pairs, concurrently when allowed; results come back in job order."""
    payload = [(cfg, seed, keep_trace) for cfg, seed in jobs]
    n = worker_count(len(payload))
    if n == 1:
        return [_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_job, payload))


def run_seeds(cfg: ExperimentConfig, seeds=None, keep_trace: bool = True) -> list:
    seeds = cfg.seeds if seeds is None else seeds
    out = []
    for (rec, err), seed in zip(run_many([(cfg, s) for s in seeds], keep_trace), seeds):
        if err is not None:
            raise RuntimeError(f"seed {seed} failed: {err}")
        out.append(rec)
    return out


@dataclass(eq=False)
class SweepReport:
    axis: str
    values: list
    seeds: list
    runs: list  # dicts: value, seed, record or error
    aggregate: dict

    def records(self) -> list:
        return [r["record"] for r in self.runs if r["record"] is not None]

    def to_dict(self) -> dict:
        runs = [{"value": r["value"], "seed": r["seed"], "error": r["error"],
                 "metrics": None if r["record"] is None else r["record"].metrics} for r in self.runs]
        return {"axis": self.axis, "values": self.values, "seeds": self.seeds, "runs": runs,
                "aggregate": self.aggregate}


def _aggregate(runs: list, values: list) -> dict:
    agg = {}
    for v in values:
        key = str(v)
        recs = [r["record"] for r in runs if r["value"] == v and r["record"] is not None]
        entry = {"runs": len(recs), "failed": sum(1 for r in runs if r["value"] == v and r["record"] is None)}
        for m in ("acc", "bwt", "fwt"):
            vals = [r.metrics[m] for r in recs if r.metrics.get(m) is not None]
            entry[f"{m}_mean"] = float(np.mean(vals)) if vals else None
            entry[f"{m}_std"] = float(np.std(vals)) if vals else None
        agg[key] = entry
    return agg


def run_sweep(base: ExperimentConfig, axis: str, values, seeds=None, keep_trace: bool = False) -> SweepReport:
    """One run per (value, seed); failed runs are recorded and the sweep continues."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    seeds = list(base.seeds if seeds is None else seeds)
    configs = [base.with_axis(axis, v) for v in values]
    jobs = [(c, s) for c in configs for s in seeds]
    results = run_many(jobs, keep_trace)
    runs = []
    for (value, seed), (rec, err) in zip([(v, s) for v in values for s in seeds], results):
        runs.append({"value": value, "seed": seed, "record": rec, "error": err})
    return SweepReport(axis, values, seeds, runs, _aggregate(runs, values))
