"""Episodic training state: label space, exemplar memory, hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ContractError
from ..model import Detector


@dataclass(frozen=True)
class LabelSpace:
    """Known classes in addition order; classifier column = 1 + position."""

    known: tuple[int, ...] = ()
    task_index: int = 0
    history: tuple[tuple[int, ...], ...] = ()

    def columns(self) -> dict[int, int]:
        return {label: i + 1 for i, label in enumerate(self.known)}

    def label_of_column(self, col: int) -> int:
        if col == 0:
            return 0
        return self.known[col - 1]

    def add(self, new_classes) -> "LabelSpace":
        new_classes = tuple(new_classes)
        overlap = set(new_classes) & set(self.known)
        if overlap:
            raise ContractError(f"classes {sorted(overlap)} are already known")
        if len(set(new_classes)) != len(new_classes):
            raise ContractError("duplicate class in oracle additions")
        return LabelSpace(
            known=self.known + new_classes,
            task_index=self.task_index + 1,
            history=self.history + (new_classes,),
        )


@dataclass(frozen=True)
class ExemplarImage:
    image_id: int
    file: str
    width: int
    height: int
    boxes: tuple[tuple[float, float, float, float], ...]  # pixel xywh, one class

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "file": self.file,
            "width": self.width,
            "height": self.height,
            "boxes": [list(b) for b in self.boxes],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ExemplarImage":
        return ExemplarImage(
            image_id=int(d["image_id"]),
            file=str(d["file"]),
            width=int(d["width"]),
            height=int(d["height"]),
            boxes=tuple(tuple(float(v) for v in b) for b in d["boxes"]),
        )


@dataclass
class ExemplarStore:
    """Up to ``cap`` stored images per known class."""

    cap: int
    per_class: dict[int, list[ExemplarImage]] = field(default_factory=dict)

    def total(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def validate(self, known):
        known = set(known)
        for c, items in self.per_class.items():
            if c not in known:
                raise ContractError(f"exemplar class {c} is not known")
            if len(items) > self.cap:
                raise ContractError(f"class {c} holds {len(items)} > cap {self.cap}")

    def to_json_dict(self) -> dict:
        return {
            "cap": self.cap,
            "per_class": {
                str(c): [e.to_json_dict() for e in items]
                for c, items in sorted(self.per_class.items())
            },
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ExemplarStore":
        return ExemplarStore(
            cap=int(d["cap"]),
            per_class={
                int(c): [ExemplarImage.from_json_dict(e) for e in items]
                for c, items in d["per_class"].items()
            },
        )


@dataclass(frozen=True)
class Hyper:
    """Training hyperparameters; the paper preset uses 50/20 epochs."""

    lr: float = 2e-4
    epochs: int = 20
    finetune_epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    alpha: float = 0.1  # objectness weight in the joint loss
    k_u: int = 5
    top_k: int = 50
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    cost_class: float = 2.0
    cost_l1: float = 5.0
    cost_giou: float = 2.0
    loss_l1: float = 5.0
    loss_giou: float = 2.0
    exemplar_cap: int = 50
    wi_recall_level: float = 0.8
    novelty_classification: bool = True
    objectness: bool = True
    score_fusion: bool = False

    def validate(self):
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.k_u < 0:
            raise ContractError(f"k_u must be >= 0, got {self.k_u}")
        if self.top_k < 1:
            raise ContractError(f"top_k must be >= 1, got {self.top_k}")
        if self.exemplar_cap < 1:
            raise ContractError(f"exemplar_cap must be >= 1, got {self.exemplar_cap}")

    def paper_preset(self) -> "Hyper":
        return replace(self, epochs=50, finetune_epochs=20)


@dataclass
class EpisodeState:
    """Everything that evolves across episodes."""

    detector: Detector
    label_space: LabelSpace
    exemplars: ExemplarStore
    optimizer: "Adam"
    rng: np.random.Generator
    counters: dict

    def snapshot(self) -> dict:
        return {
            "params": self.detector.store.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "rng_state": self.rng.bit_generator.state,
            "label_space": {
                "known": list(self.label_space.known),
                "task_index": self.label_space.task_index,
                "history": [list(h) for h in self.label_space.history],
            },
            "counters": dict(self.counters),
        }

    def restore(self, snap: dict):
        # The classifier head may have grown since the snapshot.
        current = self.detector.store.state_dict()
        if any(current[k].shape != v.shape for k, v in snap["params"].items()):
            raise ContractError("snapshot parameter shapes no longer match")
        self.detector.store.load_state_dict(snap["params"])
        self.optimizer.load_state_dict(snap["optimizer"])
        self.rng.bit_generator.state = snap["rng_state"]
        ls = snap["label_space"]
        self.label_space = LabelSpace(
            known=tuple(ls["known"]),
            task_index=ls["task_index"],
            history=tuple(tuple(h) for h in ls["history"]),
        )
        self.counters = dict(snap["counters"])
