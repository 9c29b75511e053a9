"""Run configuration: one JSON file drives a full multi-task run.

Flags override file values; unknown keys are errors, never silently
ignored. ``dump_config(parse_config(x))`` reparses to an equal config.
"""

from __future__ import annotations

import json
import hashlib
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data.generator import TaskSplitConfig
from .errors import ConfigError
from .model.config import ModelConfig
from .protocol.state import Hyper

OUT_ROOT_ENV = "OWDETR_OUT"
PRESETS = ("desk", "paper")


@dataclass(frozen=True)
class EvalConfig:
    iou_thresh: float = 0.5
    wi_recall_level: float = 0.8
    a_ose_counting: str = "instances"
    workers: int = 0  # 0 = machine parallelism

    def __post_init__(self):
        if not (0.0 < self.iou_thresh <= 1.0):
            raise ConfigError(f"eval.iou_thresh must be in (0, 1], got {self.iou_thresh}")
        if not (0.0 < self.wi_recall_level <= 1.0):
            raise ConfigError(
                f"eval.wi_recall_level must be in (0, 1], got {self.wi_recall_level}"
            )
        if self.a_ose_counting not in ("instances", "detections"):
            raise ConfigError(
                f"eval.a_ose_counting must be 'instances' or 'detections', got {self.a_ose_counting!r}"
            )
        if self.workers < 0:
            raise ConfigError(f"eval.workers must be >= 0, got {self.workers}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = ""
    preset: str = "desk"
    model: ModelConfig = field(default_factory=ModelConfig)
    data: TaskSplitConfig = field(default_factory=TaskSplitConfig)
    train: Hyper = field(default_factory=Hyper)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        self.train.validate()

    def effective_hyper(self) -> Hyper:
        return self.train.paper_preset() if self.preset == "paper" else self.train

    def resolved_out_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        root = os.environ.get(OUT_ROOT_ENV, "runs")
        return Path(root) / f"seed{self.seed}"

    def config_hash(self) -> str:
        blob = json.dumps(dump_config(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _build_section(cls, section: dict, path: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(section.keys()) - allowed
    if unknown:
        raise ConfigError(f"unknown key {path}.{sorted(unknown)[0]}")
    return cls(**section)


def _coerce_tasks(raw) -> tuple[tuple[int, ...], ...]:
    try:
        return tuple(tuple(int(c) for c in task) for task in raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"data.tasks must be a list of class-id lists: {e}") from e


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load a config file (may be absent/empty) and apply flag overrides."""
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8").strip()
        if text:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")

    allowed_top = {"seed", "out_dir", "preset", "model", "data", "train", "eval"}
    unknown = set(raw.keys()) - allowed_top
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]}")

    seed = int(raw.get("seed", 0))
    out_dir = str(raw.get("out_dir", ""))
    preset = str(raw.get("preset", "desk"))

    model_sec = dict(raw.get("model", {}))
    data_sec = dict(raw.get("data", {}))
    train_sec = dict(raw.get("train", {}))
    eval_sec = dict(raw.get("eval", {}))
    if "tasks" in data_sec:
        data_sec["tasks"] = _coerce_tasks(data_sec["tasks"])

    overrides = dict(overrides or {})
    if "seed" in overrides:
        seed = int(overrides.pop("seed"))
    if "out_dir" in overrides:
        out_dir = str(overrides.pop("out_dir"))
    if "preset" in overrides:
        preset = str(overrides.pop("preset"))
    for key in ("alpha", "k_u", "top_k"):
        if key in overrides:
            train_sec[key] = overrides.pop(key)
    if "novelty_classification" in overrides:
        train_sec["novelty_classification"] = overrides.pop("novelty_classification")
    if "objectness" in overrides:
        train_sec["objectness"] = overrides.pop("objectness")
    if "workers" in overrides:
        eval_sec["workers"] = overrides.pop("workers")
    if overrides:
        raise ConfigError(f"unknown override {sorted(overrides)[0]!r}")

    # Component seeds default to the run seed unless pinned in the file.
    model_sec.setdefault("seed", seed)
    data_sec.setdefault("seed", seed)

    model = _build_section(ModelConfig, model_sec, "model")
    data = _build_section(TaskSplitConfig, data_sec, "data")
    train = _build_section(Hyper, train_sec, "train")
    eval_cfg = _build_section(EvalConfig, eval_sec, "eval")
    return RunConfig(
        seed=seed, out_dir=out_dir, preset=preset, model=model, data=data,
        train=train, eval=eval_cfg,
    )


def dump_config(cfg: RunConfig) -> dict:
    d = {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "preset": cfg.preset,
        "model": asdict(cfg.model),
        "data": asdict(cfg.data),
        "train": asdict(cfg.train),
        "eval": asdict(cfg.eval),
    }
    d["data"]["tasks"] = [list(t) for t in cfg.data.tasks]
    return d


def save_config(cfg: RunConfig, path):
    Path(path).write_text(
        json.dumps(dump_config(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def with_ablation(cfg: RunConfig, novelty_classification: bool, objectness: bool) -> RunConfig:
    return replace(
        cfg,
        train=replace(
            cfg.train,
            novelty_classification=novelty_classification,
            objectness=objectness,
        ),
    )
