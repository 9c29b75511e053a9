"""Bounding boxes, annotated instances, labeled images."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ContractError

UNKNOWN_LABEL = 0


@dataclass(frozen=True)
class BoundingBox:
    """Center-format box, normalized to [0, 1] of the image extent."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ContractError(f"box center ({self.cx}, {self.cy}) outside [0,1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ContractError(f"box size ({self.w}, {self.h}) outside (0,1]")

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2), not clipped."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    def clipped_area(self) -> float:
        x1, y1, x2, y2 = self.corners()
        return max(0.0, min(x2, 1.0) - max(x1, 0.0)) * max(0.0, min(y2, 1.0) - max(y1, 0.0))


@dataclass(frozen=True)
class Instance:
    """One annotated object: class id (0 reserved for unknown) plus box."""

    label: int
    box: BoundingBox

    def __post_init__(self):
        if self.label < 0:
            raise ContractError(f"instance label {self.label} < 0")


@dataclass
class LabeledImage:
    """Image raster (3, H, W) in [0, 1] plus its annotated instances."""

    image_id: int
    pixels: "object"  # numpy (3, H, W) float64
    instances: list[Instance]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0.0 else 0.0


def box_from_pixels(x: float, y: float, w: float, h: float, img_w: int, img_h: int) -> BoundingBox:
    """Absolute top-left pixel xywh to normalized center format."""
    return BoundingBox(
        cx=(x + w / 2.0) / img_w,
        cy=(y + h / 2.0) / img_h,
        w=w / img_w,
        h=h / img_h,
    )


def box_to_pixels(box: BoundingBox, img_w: int, img_h: int) -> tuple[float, float, float, float]:
    """Normalized center format to absolute top-left pixel xywh."""
    return (
        (box.cx - box.w / 2.0) * img_w,
        (box.cy - box.h / 2.0) * img_h,
        box.w * img_w,
        box.h * img_h,
    )
