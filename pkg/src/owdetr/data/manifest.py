"""Dataset manifests (line-delimited JSON) and PPM raster io.

A manifest file is one JSON record per line: a header carrying the
schema version, then image records, then annotation records with
absolute-pixel top-left [x, y, w, h] boxes. Boxes are converted to
normalized center format only when instances are materialized for the
model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ManifestParseError, VersionError
from .boxes import BoundingBox, Instance, box_from_pixels

SCHEMA_NAME = "owdetr-manifest"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    file: str
    width: int
    height: int


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: int
    label: int
    bbox: tuple[float, float, float, float]  # absolute pixel x, y, w, h


@dataclass
class DatasetManifest:
    images: list[ImageRecord] = field(default_factory=list)
    annotations: list[AnnotationRecord] = field(default_factory=list)

    def validate(self):
        ids = {im.image_id for im in self.images}
        for ann in self.annotations:
            if ann.image_id not in ids:
                raise ManifestParseError(
                    f"annotation references missing image_id {ann.image_id}"
                )

    def image_by_id(self, image_id: int) -> ImageRecord:
        for im in self.images:
            if im.image_id == image_id:
                return im
        raise KeyError(image_id)

    def annotations_for(self, image_id: int) -> list[AnnotationRecord]:
        return [a for a in self.annotations if a.image_id == image_id]

    def instances_for(self, image_id: int) -> list[Instance]:
        im = self.image_by_id(image_id)
        out = []
        for a in self.annotations_for(image_id):
            x, y, w, h = a.bbox
            out.append(Instance(a.label, box_from_pixels(x, y, w, h, im.width, im.height)))
        return out

    def labels(self) -> set[int]:
        return {a.label for a in self.annotations}


def save_manifest(manifest: DatasetManifest, path):
    path = Path(path)
    lines = [json.dumps({"schema": SCHEMA_NAME, "version": SCHEMA_VERSION})]
    for im in manifest.images:
        lines.append(
            json.dumps(
                {
                    "kind": "image",
                    "image_id": im.image_id,
                    "file": im.file,
                    "width": im.width,
                    "height": im.height,
                }
            )
        )
    for a in manifest.annotations:
        lines.append(
            json.dumps(
                {
                    "kind": "annotation",
                    "image_id": a.image_id,
                    "label": a.label,
                    "bbox": list(a.bbox),
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    manifest = DatasetManifest()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestParseError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if lineno == 1:
                if rec.get("schema") != SCHEMA_NAME:
                    raise ManifestParseError(f"{path}:1: not a {SCHEMA_NAME} file")
                if rec.get("version") != SCHEMA_VERSION:
                    raise VersionError(
                        f"{path}:1: unsupported manifest version {rec.get('version')!r}"
                    )
                continue
            kind = rec.get("kind")
            try:
                if kind == "image":
                    manifest.images.append(
                        ImageRecord(
                            image_id=int(rec["image_id"]),
                            file=str(rec["file"]),
                            width=int(rec["width"]),
                            height=int(rec["height"]),
                        )
                    )
                elif kind == "annotation":
                    bbox = rec["bbox"]
                    if len(bbox) != 4:
                        raise KeyError("bbox")
                    manifest.annotations.append(
                        AnnotationRecord(
                            image_id=int(rec["image_id"]),
                            label=int(rec["label"]),
                            bbox=tuple(float(v) for v in bbox),
                        )
                    )
                else:
                    raise ManifestParseError(
                        f"{path}:{lineno}: unknown record kind {kind!r}"
                    )
            except (KeyError, TypeError, ValueError) as e:
                raise ManifestParseError(
                    f"{path}:{lineno}: malformed {kind or 'record'}: {e}"
                ) from e
    manifest.validate()
    return manifest


def save_ppm(path, pixels: np.ndarray):
    """Write a (3, H, W) float image in [0, 1] as binary PPM (P6)."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) pixels, got {pixels.shape}")
    _, h, w = pixels.shape
    quantized = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    body = quantized.transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + body)


def load_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ManifestParseError(f"{path}: not a binary PPM (P6) file")
    # Header: magic, width, height, maxval, then a single whitespace byte.
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ManifestParseError(f"{path}: unsupported maxval {maxval}")
    body = data[pos : pos + 3 * w * h]
    if len(body) != 3 * w * h:
        raise ManifestParseError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return arr.astype(np.float64) / 255.0


def load_image_pixels(manifest_dir, image: ImageRecord) -> np.ndarray:
    return load_ppm(Path(manifest_dir) / image.file)
