"""Synthetic open-world benchmark generator and task projection.

Classes are partitioned into an ordered episode schedule. Every
rendered image mixes objects from the full class taxonomy (unless the
future-object switch is off), but the train manifest of episode t only
annotates the classes introduced at t; earlier classes are retained
through exemplar replay and later classes stay unannotated, which is
what gives pseudo-labeling something to find.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .boxes import BoundingBox, box_from_pixels, iou
from .manifest import AnnotationRecord, DatasetManifest, ImageRecord, save_ppm
from .shapes import SHAPE_COLORS, SHAPE_NAMES, mask_pixel_bounds, shape_mask

IMAGE_DIR = "images"


@dataclass(frozen=True)
class TaskSplitConfig:
    tasks: tuple[tuple[int, ...], ...] = ((1, 2), (3, 4), (5, 6), (7, 8))
    images_per_task_train: int = 40
    images_per_task_test: int = 40
    image_size: int = 64
    noise_level: float = 0.04
    objects_min: int = 1
    objects_max: int = 4
    include_future_objects: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("tasks: at least one task required")
        seen: set[int] = set()
        for t, classes in enumerate(self.tasks):
            if len(classes) == 0:
                raise ConfigError(f"tasks[{t}]: zero classes in a task")
            for c in classes:
                if c in seen:
                    raise ConfigError(f"tasks[{t}]: class {c} appears in more than one task")
                if c not in SHAPE_NAMES:
                    raise ConfigError(
                        f"tasks[{t}]: class {c} is not a generator class (1..{len(SHAPE_NAMES)})"
                    )
                seen.add(c)
        if self.images_per_task_train <= 0 or self.images_per_task_test <= 0:
            raise ConfigError("images_per_task_train/_test must be positive")
        if self.image_size < 16:
            raise ConfigError(f"image_size {self.image_size} < 16")
        if not (0 < self.objects_min <= self.objects_max):
            raise ConfigError("objects range must satisfy 0 < min <= max")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be non-negative")

    @property
    def all_classes(self) -> tuple[int, ...]:
        return tuple(c for task in self.tasks for c in task)

    def classes_known_at(self, task_index: int) -> tuple[int, ...]:
        return tuple(c for task in self.tasks[: task_index + 1] for c in task)


@dataclass
class RenderedObject:
    label: int
    bbox_pixels: tuple[float, float, float, float]


def _image_rng(seed: int, image_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, image_id)))


def render_image(cfg: TaskSplitConfig, image_id: int, classes: tuple[int, ...]):
    """Render one image; returns (pixels (3,S,S), objects).

    Deterministic: all randomness comes from (cfg.seed, image_id).
    Annotation boxes are the exact pixel bounds of each shape mask, so
    every lit pixel of a shape lies inside its box even after later
    shapes partially occlude it.
    """
    rng = _image_rng(cfg.seed, image_id)
    s = cfg.image_size
    base = rng.uniform(0.35, 0.55)
    pixels = np.clip(base + cfg.noise_level * rng.standard_normal((3, s, s)), 0.0, 1.0)

    n_objects = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    objects: list[RenderedObject] = []
    placed: list[BoundingBox] = []
    for _ in range(n_objects):
        label = int(rng.choice(classes))
        radius, cx, cy = 0.0, 0.0, 0.0
        for _attempt in range(8):
            radius = rng.uniform(0.10 * s, 0.18 * s)
            cx = rng.uniform(radius + 1, s - radius - 1)
            cy = rng.uniform(radius + 1, s - radius - 1)
            candidate = BoundingBox(cx / s, cy / s, 2 * radius / s, 2 * radius / s)
            if all(iou(candidate, prev) < 0.25 for prev in placed):
                break
        mask = shape_mask(label, cx, cy, radius, s, s)
        bounds = mask_pixel_bounds(mask)
        if bounds is None:
            continue
        color = np.clip(
            np.asarray(SHAPE_COLORS[label]) + rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0
        )
        pixels[:, mask] = color[:, None]
        objects.append(RenderedObject(label, tuple(float(v) for v in bounds)))
        x, y, w, h = bounds
        placed.append(box_from_pixels(x, y, w, h, s, s))
    return pixels, objects


def generate_dataset(
    cfg: TaskSplitConfig, out_dir
) -> tuple[list[DatasetManifest], DatasetManifest]:
    """Render the benchmark into out_dir; returns (per-task train, test).

    Train manifest t annotates only the classes introduced at episode t;
    the test manifest annotates every object with its true label.
    """
    out_dir = Path(out_dir)
    (out_dir / IMAGE_DIR).mkdir(parents=True, exist_ok=True)

    train_manifests = [DatasetManifest() for _ in cfg.tasks]
    test_manifest = DatasetManifest()

    next_id = 0
    for t, task_classes in enumerate(cfg.tasks):
        annotated = set(task_classes)
        visible = cfg.all_classes if cfg.include_future_objects else cfg.classes_known_at(t)
        for _ in range(cfg.images_per_task_train):
            image_id, objects = _emit_image(cfg, out_dir, next_id, visible)
            next_id += 1
            train_manifests[t].images.append(_image_record(cfg, image_id))
            for obj in objects:
                if obj.label in annotated:
                    train_manifests[t].annotations.append(
                        AnnotationRecord(image_id, obj.label, obj.bbox_pixels)
                    )

    for _ in range(cfg.images_per_task_test):
        image_id, objects = _emit_image(cfg, out_dir, next_id, cfg.all_classes)
        next_id += 1
        test_manifest.images.append(_image_record(cfg, image_id))
        for obj in objects:
            test_manifest.annotations.append(
                AnnotationRecord(image_id, obj.label, obj.bbox_pixels)
            )

    for m in train_manifests:
        m.validate()
    test_manifest.validate()
    return train_manifests, test_manifest


def _emit_image(cfg, out_dir: Path, image_id: int, visible_classes):
    pixels, objects = render_image(cfg, image_id, tuple(visible_classes))
    save_ppm(out_dir / IMAGE_DIR / f"{image_id:06d}.ppm", pixels)
    return image_id, objects


def _image_record(cfg: TaskSplitConfig, image_id: int) -> ImageRecord:
    return ImageRecord(
        image_id=image_id,
        file=f"{IMAGE_DIR}/{image_id:06d}.ppm",
        width=cfg.image_size,
        height=cfg.image_size,
    )


def project_to_task(manifest: DatasetManifest, known, mode: str) -> DatasetManifest:
    """Restrict a manifest to a known-class view.

    mode="train": annotations outside ``known`` are dropped (their
    objects stay in the pixels, unannotated). mode="eval": labels
    outside ``known`` are rewritten to the unknown label 0 and kept.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"project mode must be 'train' or 'eval', got {mode!r}")
    known = set(known)
    out = DatasetManifest(images=list(manifest.images))
    for ann in manifest.annotations:
        if ann.label in known:
            out.annotations.append(ann)
        elif mode == "eval":
            out.annotations.append(AnnotationRecord(ann.image_id, 0, ann.bbox))
    return out
