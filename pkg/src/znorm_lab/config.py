"""YAML run configuration with strict key checking.

Seeds: the top-level ``seed`` is the root. Derived seeds are
``data = seed``, ``model = seed + 1``, ``shuffle = seed + 2``,
``split = seed + 3``; method comparisons therefore share data, split,
initialization and batch order.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

DATASETS = {
    "two_moons": {"n": 500, "noise_std": 0.1, "test_fraction": 0.2},
    "blobs": {"n": 300, "k": 3, "test_fraction": 0.2},
    "blob_masks": {"n": 128, "size": 16, "noise_std": 0.3, "test_fraction": 0.25},
    "blob_classes": {"n": 256, "size": 8, "channels": 1, "test_fraction": 0.25},
    "cifar10": {"path": None, "test_path": None, "limit": None, "test_limit": None, "test_fraction": 0.0},
    "csv": {"path": None, "label_column": "label", "test_fraction": 0.2},
    "file": {"path": None},
    "regression": {"n": 64, "in_dim": 3, "out_dim": 2, "test_fraction": 0.0},
}
ARCHS = {
    "residual_mlp": {"width": 16, "depth": 2},
    "plain_mlp": {"width": 16, "depth": 2},
    "tiny_resnet": {"channels": 8, "blocks": 2, "stem_stride": 2},
    "tiny_segnet": {"channels": 8, "blocks": 2},
    "linear": {"hidden": None},
}
SEED_OFFSETS = {"data": 0, "model": 1, "shuffle": 2, "split": 3}
METRICS = ("loss", "accuracy", "f1", "tversky", "hausdorff")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _check_keys(block: dict, allowed, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _positive_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{where}: expected a positive integer, got {value!r}")
    return value


@dataclass
class ScheduleConfig:
    epochs: int = 10
    batch_size: int = 64
    lr_decay_factor: float = 1.0
    lr_decay_every: int = 0
    lr_decay_start_epoch: int = 0


@dataclass
class EvalConfig:
    metrics: list[str] = field(default_factory=lambda: ["loss"])
    eval_every: int = 1
    tversky_alpha: float = 0.5
    tversky_beta: float = 0.5


@dataclass
class OutputConfig:
    log: str | None = None
    checkpoint: str | None = None


@dataclass
class GradCheckConfig:
    batch: int = 4
    h: float = 1e-4
    tol: float = 1e-4


@dataclass
class RunConfig:
    name: str
    seed: int
    dataset: dict
    model: dict
    optimizer: dict
    pipeline: list[dict]
    pipeline_scope: str
    schedule: ScheduleConfig
    eval: EvalConfig
    output: OutputConfig
    gradcheck: GradCheckConfig

    def seed_for(self, purpose: str) -> int:
        return self.seed + SEED_OFFSETS[purpose]

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of the experiment-defining fields (output paths excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **changes) -> "RunConfig":
        d = copy.deepcopy(self.to_dict())
        d.update(changes)
        return parse_config(d)


OPTIMIZER_KEYS = {"kind", "lr", "beta1", "beta2", "eps", "lambda", "momentum", "coupled_l2"}
TOP_KEYS = {"name", "seed", "dataset", "model", "optimizer", "pipeline", "pipeline_scope",
            "schedule", "eval", "output", "gradcheck"}


def parse_config(raw: dict) -> RunConfig:
    from .optim import OptimizerConfig
    from .transforms import TransformPipeline

    _check_keys(raw, TOP_KEYS, "config")
    for key in ("dataset", "model"):
        if key not in raw:
            raise ConfigError(f"config.{key}: required block missing")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"config.seed: expected a non-negative integer, got {seed!r}")

    dataset = dict(raw["dataset"]) if isinstance(raw["dataset"], dict) else raw["dataset"]
    _check_keys(dataset, {"name"} | set().union(*[set(v) for v in DATASETS.values()]), "dataset")
    dname = dataset.get("name")
    if dname not in DATASETS:
        raise ConfigError(f"dataset.name: unknown dataset {dname!r} (expected one of {sorted(DATASETS)})")
    _check_keys(dataset, {"name"} | set(DATASETS[dname]), "dataset")
    dataset = {"name": dname, **DATASETS[dname], **dataset}
    if dname in ("cifar10", "csv", "file") and not dataset.get("path"):
        raise ConfigError(f"dataset.path: required for dataset {dname!r}")

    model = dict(raw["model"]) if isinstance(raw["model"], dict) else raw["model"]
    _check_keys(model, {"arch"} | set().union(*[set(v) for v in ARCHS.values()]), "model")
    arch = model.get("arch")
    if arch not in ARCHS:
        raise ConfigError(f"model.arch: unknown architecture {arch!r} (expected one of {sorted(ARCHS)})")
    _check_keys(model, {"arch"} | set(ARCHS[arch]), "model")
    model = {"arch": arch, **ARCHS[arch], **model}
    for key, value in model.items():
        if key not in ("arch", "hidden") and value is not None:
            _positive_int(value, f"model.{key}")

    opt = dict(raw.get("optimizer", {}))
    _check_keys(opt, OPTIMIZER_KEYS, "optimizer")
    try:
        oc = OptimizerConfig(**{("weight_decay" if k == "lambda" else k): v for k, v in opt.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None
    optimizer = {"kind": oc.kind, "lr": oc.lr, "beta1": oc.beta1, "beta2": oc.beta2, "eps": oc.eps,
                 "lambda": oc.weight_decay, "momentum": oc.momentum, "coupled_l2": oc.coupled_l2}

    pipeline = raw.get("pipeline", []) or []
    if not isinstance(pipeline, list):
        raise ConfigError("pipeline: expected a list of {name, ...} entries")
    scope = raw.get("pipeline_scope", "layer")
    try:
        pipeline = TransformPipeline.from_config(pipeline, scope=scope).to_config()
    except ValueError as exc:
        raise ConfigError(str(exc) if str(exc).startswith("pipeline") else f"pipeline: {exc}") from None

    blocks = {}
    for key, cls in (("schedule", ScheduleConfig), ("eval", EvalConfig), ("output", OutputConfig),
                     ("gradcheck", GradCheckConfig)):
        block = raw.get(key, {}) or {}
        _check_keys(block, cls.__dataclass_fields__, key)
        blocks[key] = cls(**block)
    sched = blocks["schedule"]
    _positive_int(sched.epochs, "schedule.epochs")
    _positive_int(sched.batch_size, "schedule.batch_size")
    _positive_int(blocks["eval"].eval_every, "eval.eval_every")
    for m in blocks["eval"].metrics:
        if m not in METRICS:
            raise ConfigError(f"eval.metrics: unknown metric {m!r} (expected one of {METRICS})")

    return RunConfig(name=str(raw.get("name", "run")), seed=seed, dataset=dataset, model=model,
                     optimizer=optimizer, pipeline=pipeline, pipeline_scope=scope, **blocks)


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("znorm_lab.presets").iterdir()
                  if p.name.endswith(".yaml"))


def resolve_config_path(name_or_path: str):
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files("znorm_lab.presets") / f"{name_or_path}.yaml"
    if candidate.is_file():
        return candidate
    raise ConfigError(f"config: no such file or preset {name_or_path!r} (presets: {', '.join(preset_names())})")


def load_config(name_or_path: str) -> RunConfig:
    path = resolve_config_path(name_or_path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse error: {exc}") from None
    if raw is None:
        raise ConfigError("config: empty file")
    cfg = parse_config(raw)
    # relative data paths: working directory first, then the config file's directory
    if isinstance(path, Path):
        for key in ("path", "test_path"):
            value = cfg.dataset.get(key)
            if isinstance(value, list):
                cfg.dataset[key] = [_resolve_data_path(v, path.parent) for v in value]
            elif value:
                cfg.dataset[key] = _resolve_data_path(value, path.parent)
    return cfg


def _resolve_data_path(value: str, base: Path) -> str:
    p = Path(value)
    if p.is_absolute() or p.exists() or not (base / p).exists():
        return value
    return str(base / p)
