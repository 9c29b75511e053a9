"""Synthetic open-world shapes benchmark: rendering, manifests, splits."""

from .boxes import (
    UNKNOWN_LABEL,
    BoundingBox,
    Instance,
    LabeledImage,
    box_from_pixels,
    box_to_pixels,
    iou,
)
from .generator import TaskSplitConfig, generate_dataset, project_to_task, render_image
from .manifest import (
    AnnotationRecord,
    DatasetManifest,
    ImageRecord,
    load_image_pixels,
    load_manifest,
    load_ppm,
    save_manifest,
    save_ppm,
)

__all__ = [
    "AnnotationRecord",
    "BoundingBox",
    "DatasetManifest",
    "ImageRecord",
    "Instance",
    "LabeledImage",
    "TaskSplitConfig",
    "UNKNOWN_LABEL",
    "box_from_pixels",
    "box_to_pixels",
    "generate_dataset",
    "iou",
    "load_image_pixels",
    "load_manifest",
    "load_ppm",
    "project_to_task",
    "render_image",
    "save_manifest",
    "save_ppm",
]
