"""Experiment configuration: dataclasses, strict JSON loading, defaults by stream kind."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..continual import ProjectionConfig
from ..errors import ConfigError
from ..stream import SamplingPolicy, TaskStreamConfig

STRATEGIES = ("plain", "gem", "dcl")
METHODS = ("none", "grad-learner", "1-PL", "P-PL", "noise-uniform", "noise-normal",
           "noise-uniform-normalized", "noise-normal-normalized")
POOL_KINDS = ("mixture", "noise")
SWEEP_AXES = ("p", "alpha", "lambda", "arch", "batch")

# tuned values for the two stream families
TRANSFORM_DEFAULTS = {"p": 0.15, "alpha": 0.001, "lam": 0.30, "hidden": (64, 16)}
SPLIT_DEFAULTS = {"p": 0.30, "alpha": 0.005, "lam": 2.00, "hidden": (128, 32)}


@dataclass(frozen=True)
class LearnerConfig:
    hidden: tuple = (64, 16)
    alpha: float = 0.001
    lam: float = 0.30
    eta_hat: float | None = None
    warmup: int = 50
    straight_through: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ConfigError("learner layer widths must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.eta_hat is not None and self.eta_hat < 0:
            raise ConfigError("eta_hat must be non-negative")
        if self.warmup < 0:
            raise ConfigError("warmup must be non-negative")


@dataclass(frozen=True)
class PoolConfig:
    kind: str = "mixture"
    size: int = 2000
    overlap: float = 0.5

    def __post_init__(self):
        if self.kind not in POOL_KINDS:
            raise ConfigError(f"pool kind must be one of {POOL_KINDS}")
        if self.size < 1:
            raise ConfigError("pool size must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap must lie in [0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    stream: TaskStreamConfig = field(default_factory=TaskStreamConfig)
    strategy: str = "gem"
    method: str = "grad-learner"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    policy: SamplingPolicy = field(default_factory=SamplingPolicy)
    pool: PoolConfig = field(default_factory=PoolConfig)
    seeds: tuple = (0,)
    eta: float = 0.1
    hidden: tuple = (100, 100)
    memory_budget: int = 50
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    dcl_decay: float = 0.9
    eval_every: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("classifier layer widths must be positive")
        if self.memory_budget < 1:
            raise ConfigError("memory_budget must be positive")
        if not 0.0 < self.dcl_decay <= 1.0:
            raise ConfigError("dcl_decay must lie in (0, 1]")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be non-negative")
        if self.method in ("1-PL", "P-PL") and not self.hidden:
            raise ConfigError("pseudo-labeling needs a classifier with at least one hidden layer")

    @property
    def num_classes(self) -> int:
        return self.stream.num_classes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["learner"]["lambda"] = d["learner"].pop("lam")
        d["learner"]["hidden"] = list(self.learner.hidden)
        d["seeds"] = list(self.seeds)
        d["hidden"] = list(self.hidden)
        return d

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (seed list and output directory excluded)."""
        d = self.to_dict()
        d.pop("seeds")
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_axis(self, axis: str, value) -> "ExperimentConfig":
        """Copy with one ablation axis set."""
        if axis == "p":
            return replace(self, policy=replace(self.policy, p=float(value)))
        if axis == "alpha":
            return replace(self, learner=replace(self.learner, alpha=float(value)))
        if axis == "lambda":
            return replace(self, learner=replace(self.learner, lam=float(value)))
        if axis == "arch":
            return replace(self, learner=replace(self.learner, hidden=parse_arch(value)))
        if axis == "batch":
            return replace(self, policy=replace(self.policy, unlabeled_batch=int(value)))
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def parse_arch(value) -> tuple:
    """``"64x16"``, ``"64,16"`` or a sequence of widths."""
    if isinstance(value, str):
        parts = value.replace(",", "x").split("x")
        try:
            return tuple(int(p) for p in parts if p)
        except ValueError:
            raise ConfigError(f"bad architecture {value!r}") from None
    return tuple(int(v) for v in value)


def _strict(cls, data: dict, where: str, aliases: dict | None = None) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    aliases = aliases or {}
    names = {f.name for f in fields(cls)}
    out = {}
    for key, value in data.items():
        name = aliases.get(key, key)
        if name not in names or key in aliases.values():
            raise ConfigError(f"unknown key {where}.{key}")
        out[name] = value
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config; unspecified learner/policy knobs take the stream family's tuned defaults."""
    top = _strict(ExperimentConfig, data, "config")
    try:
        stream = TaskStreamConfig(**_strict(TaskStreamConfig, top.pop("stream", {}), "stream"))
        tuned = SPLIT_DEFAULTS if stream.transform_kind == "split" else TRANSFORM_DEFAULTS
        learner_kw = {"hidden": tuned["hidden"], "alpha": tuned["alpha"], "lam": tuned["lam"]}
        learner_kw.update(_strict(LearnerConfig, top.pop("learner", {}), "learner", {"lambda": "lam"}))
        policy_kw = {"p": tuned["p"]}
        policy_kw.update(_strict(SamplingPolicy, top.pop("policy", {}), "policy"))
        pool = PoolConfig(**_strict(PoolConfig, top.pop("pool", {}), "pool"))
        projection = ProjectionConfig(**_strict(ProjectionConfig, top.pop("projection", {}), "projection"))
        return ExperimentConfig(stream=stream, learner=LearnerConfig(**learner_kw), policy=SamplingPolicy(**policy_kw),
                                pool=pool, projection=projection, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def default_config(stream_kind: str = "permutation", **overrides) -> ExperimentConfig:
    return config_from_dict({"stream": {"transform_kind": stream_kind}, **overrides})


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
