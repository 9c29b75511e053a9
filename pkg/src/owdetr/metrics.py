"""Open-world detection evaluation: per-group mAP, unknown recall,
wilderness impact, absolute open-set error.

All metrics run at IoU 0.5 with all-point interpolated AP. Wilderness
impact follows the two-pass precision reading: known-class detections
that land on unknown ground truth are excluded from the closed-set
precision and counted as false positives in the open-set precision,
both read from the pooled PR curve at a fixed recall level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.boxes import BoundingBox, Instance, iou
from .data.manifest import DatasetManifest
from .errors import ContractError

IOU_THRESHOLD_DEFAULT = 0.5
WI_RECALL_LEVEL_DEFAULT = 0.8


@dataclass(frozen=True)
class Detection:
    label: int
    score: float
    box: BoundingBox


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    map_previous: float | None
    map_current: float | None
    map_both: float | None
    u_recall: float | None
    wi: float | None
    a_ose: int | None
    wi_note: str | None
    n_images: int
    gt_per_class: dict[int, int]
    n_unknown_gt: int

    def to_json_dict(self) -> dict:
        return {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "map_previous": self.map_previous,
            "map_current": self.map_current,
            "map_both": self.map_both,
            "u_recall": self.u_recall,
            "wi": self.wi,
            "a_ose": self.a_ose,
            "wi_note": self.wi_note,
            "n_images": self.n_images,
            "gt_per_class": {str(k): v for k, v in sorted(self.gt_per_class.items())},
            "n_unknown_gt": self.n_unknown_gt,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "EvalReport":
        return EvalReport(
            per_class_ap={int(k): v for k, v in d["per_class_ap"].items()},
            map_previous=d["map_previous"],
            map_current=d["map_current"],
            map_both=d["map_both"],
            u_recall=d["u_recall"],
            wi=d["wi"],
            a_ose=d["a_ose"],
            wi_note=d.get("wi_note"),
            n_images=d["n_images"],
            gt_per_class={int(k): v for k, v in d["gt_per_class"].items()},
            n_unknown_gt=d["n_unknown_gt"],
        )


def match_greedy(
    dets: list[Detection],
    gts: list[Instance],
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
) -> tuple[list[bool], list[bool]]:
    """Score-ordered greedy matching within one image.

    A detection is a true positive when its best-IoU unmatched
    same-label GT reaches the threshold; that GT is then consumed, so
    duplicates become false positives. Returns (per-detection TP flags,
    per-GT matched flags).
    """
    for a, b in zip(dets, dets[1:]):
        if a.score < b.score:
            raise ContractError("detections must be sorted by score, non-increasing")
    tp_flags = [False] * len(dets)
    matched = [False] * len(gts)
    for di, det in enumerate(dets):
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j] or gt.label != det.label:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_thresh:
            tp_flags[di] = True
            matched[best_j] = True
    return tp_flags, matched


def average_precision(records: list[tuple[float, bool]], n_gt: int) -> float:
    """All-point interpolated AP from pooled (score, is_tp) records."""
    if n_gt < 0:
        raise ContractError(f"n_gt must be >= 0, got {n_gt}")
    if n_gt == 0 or not records:
        return 0.0
    order = sorted(range(len(records)), key=lambda i: (-records[i][0], i))
    tps = np.array([records[i][1] for i in order], dtype=np.float64)
    cum_tp = np.cumsum(tps)
    cum_fp = np.cumsum(1.0 - tps)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # Precision envelope from the right, then sum rectangle areas.
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recall, precision):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def class_average_precision(
    dets_per_image: dict[int, list[Detection]],
    gts_per_image: dict[int, list[Instance]],
    class_id: int,
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
) -> tuple[float, int]:
    """(AP, n_gt) for one class, pooled over images."""
    records: list[tuple[float, bool]] = []
    n_gt = 0
    for image_id in sorted(gts_per_image.keys()):
        gts = [g for g in gts_per_image[image_id] if g.label == class_id]
        n_gt += len(gts)
        dets = [d for d in dets_per_image.get(image_id, []) if d.label == class_id]
        tp_flags, _ = match_greedy(dets, gts, iou_thresh)
        records.extend((d.score, tp) for d, tp in zip(dets, tp_flags))
    return average_precision(records, n_gt), n_gt


def unknown_recall(
    dets_per_image: dict[int, list[Detection]],
    gts_per_image: dict[int, list[Instance]],
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
) -> float | None:
    """Fraction of unknown GT matched by unknown-labeled detections.

    Absent (None) when the eval set has no unknown ground truth.
    """
    total, hit = 0, 0
    for image_id in sorted(gts_per_image.keys()):
        gts = [g for g in gts_per_image[image_id] if g.label == 0]
        total += len(gts)
        if not gts:
            continue
        dets = [d for d in dets_per_image.get(image_id, []) if d.label == 0]
        _, matched = match_greedy(dets, gts, iou_thresh)
        hit += sum(matched)
    if total == 0:
        return None
    return hit / total


def _known_detection_flags(
    dets_per_image,
    gts_per_image,
    known: set[int],
    iou_thresh: float,
):
    """Pool known-class detections with flags: 'tp', 'fp_bg', or 'fp_unk'."""
    pooled: list[tuple[float, str]] = []
    n_known_gt = 0
    for image_id in sorted(gts_per_image.keys()):
        gts = gts_per_image[image_id]
        known_gts = [g for g in gts if g.label in known]
        unknown_gts = [g for g in gts if g.label == 0]
        n_known_gt += len(known_gts)
        dets = [d for d in dets_per_image.get(image_id, []) if d.label in known]
        tp_flags, _ = match_greedy(dets, known_gts, iou_thresh)
        for det, tp in zip(dets, tp_flags):
            if tp:
                pooled.append((det.score, "tp"))
            elif any(iou(det.box, g.box) >= iou_thresh for g in unknown_gts):
                pooled.append((det.score, "fp_unk"))
            else:
                pooled.append((det.score, "fp_bg"))
    pooled.sort(key=lambda t: -t[0])
    return pooled, n_known_gt


def wilderness_impact(
    dets_per_image,
    gts_per_image,
    known: set[int],
    recall_level: float = WI_RECALL_LEVEL_DEFAULT,
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
) -> tuple[float | None, str | None]:
    """WI = P_known / P_known-and-unknown - 1 at the given recall level.

    Returns (value, note); value is None with an explanatory note when
    the recall level is unreachable. Exactly 0 when no unknown GT
    exists (no detection can be an open-set false positive).
    """
    pooled, n_known_gt = _known_detection_flags(
        dets_per_image, gts_per_image, known, iou_thresh
    )
    if n_known_gt == 0:
        return None, "no known ground truth"
    tp = fp_bg = fp_unk = 0
    for score, flag in pooled:
        tp += flag == "tp"
        fp_bg += flag == "fp_bg"
        fp_unk += flag == "fp_unk"
        if tp / n_known_gt >= recall_level:
            closed = tp / (tp + fp_bg) if tp + fp_bg else 0.0
            open_ = tp / (tp + fp_bg + fp_unk)
            if open_ == 0.0:
                return None, "no true positives at the recall level"
            return closed / open_ - 1.0, None
    max_recall = (sum(1 for _, f in pooled if f == "tp") / n_known_gt) if pooled else 0.0
    return None, f"recall level {recall_level} unreachable (max recall {max_recall:.3f})"


def a_ose(
    dets_per_image,
    gts_per_image,
    known: set[int],
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
    counting: str = "instances",
) -> int:
    """Open-set error count.

    counting="instances" (default): unknown GT instances overlapped by
    at least one known-class detection. counting="detections": known
    class detections overlapping any unknown GT.
    """
    if counting not in ("instances", "detections"):
        raise ContractError(f"counting must be 'instances' or 'detections', got {counting!r}")
    total = 0
    for image_id in sorted(gts_per_image.keys()):
        unknown_gts = [g for g in gts_per_image[image_id] if g.label == 0]
        dets = [d for d in dets_per_image.get(image_id, []) if d.label in known]
        if counting == "instances":
            for g in unknown_gts:
                if any(iou(d.box, g.box) >= iou_thresh for d in dets):
                    total += 1
        else:
            for d in dets:
                if any(iou(d.box, g.box) >= iou_thresh for g in unknown_gts):
                    total += 1
    return total


def evaluate(
    dets_per_image: dict[int, list[Detection]],
    gts_per_image: dict[int, list[Instance]],
    previous_known,
    current_known,
    iou_thresh: float = IOU_THRESHOLD_DEFAULT,
    wi_recall_level: float = WI_RECALL_LEVEL_DEFAULT,
    a_ose_counting: str = "instances",
) -> EvalReport:
    """Aggregate one task evaluation into a report.

    previous_known / current_known partition the known label set. The
    unknown-facing metrics are reported only when the eval set actually
    contains unknown ground truth.
    """
    previous_known = sorted(set(previous_known))
    current_known = sorted(set(current_known))
    known = set(previous_known) | set(current_known)

    per_class_ap: dict[int, float] = {}
    gt_per_class: dict[int, int] = {}
    for c in sorted(known):
        ap, n_gt = class_average_precision(dets_per_image, gts_per_image, c, iou_thresh)
        per_class_ap[c] = ap
        gt_per_class[c] = n_gt

    def group_map(group) -> float | None:
        if not group:
            return None
        return float(np.mean([per_class_ap[c] for c in group]))

    n_unknown_gt = sum(
        sum(1 for g in gts if g.label == 0) for gts in gts_per_image.values()
    )

    if n_unknown_gt > 0:
        u_rec = unknown_recall(dets_per_image, gts_per_image, iou_thresh)
        wi_val, wi_note = wilderness_impact(
            dets_per_image, gts_per_image, known, wi_recall_level, iou_thresh
        )
        aose_val = a_ose(dets_per_image, gts_per_image, known, iou_thresh, a_ose_counting)
    else:
        u_rec, wi_val, wi_note, aose_val = None, None, None, None

    return EvalReport(
        per_class_ap=per_class_ap,
        map_previous=group_map(previous_known),
        map_current=group_map(current_known),
        map_both=group_map(sorted(known)),
        u_recall=u_rec,
        wi=wi_val,
        a_ose=aose_val,
        wi_note=wi_note,
        n_images=len(gts_per_image),
        gt_per_class=gt_per_class,
        n_unknown_gt=n_unknown_gt,
    )


def gts_from_manifest(manifest: DatasetManifest) -> dict[int, list[Instance]]:
    return {im.image_id: manifest.instances_for(im.image_id) for im in manifest.images}


def save_detections(dets_per_image: dict[int, list[Detection]], path):
    """One JSON record per detection: image_id, label, score, box."""
    lines = []
    for image_id in sorted(dets_per_image.keys()):
        for d in dets_per_image[image_id]:
            lines.append(
                json.dumps(
                    {
                        "image_id": image_id,
                        "label": d.label,
                        "score": d.score,
                        "box": [d.box.cx, d.box.cy, d.box.w, d.box.h],
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_detections(path) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            cx, cy, w, h = rec["box"]
            det = Detection(int(rec["label"]), float(rec["score"]), BoundingBox(cx, cy, w, h))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ContractError(f"{path}:{lineno}: malformed detection record: {e}") from e
        out.setdefault(int(rec["image_id"]), []).append(det)
    for dets in out.values():
        dets.sort(key=lambda d: -d.score)
    return out


def save_report(report: EvalReport, json_path, text_path=None):
    Path(json_path).write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if text_path is not None:
        Path(text_path).write_text(render_report_text(report), encoding="utf-8")


def load_report(json_path) -> EvalReport:
    return EvalReport.from_json_dict(json.loads(Path(json_path).read_text(encoding="utf-8")))


def _fmt(v, digits=4) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def render_report_text(report: EvalReport) -> str:
    lines = ["task evaluation", "==============="]
    lines.append(f"images:          {report.n_images}")
    lines.append(f"unknown GT:      {report.n_unknown_gt}")
    lines.append("per-class AP:")
    for c, ap in sorted(report.per_class_ap.items()):
        lines.append(f"  class {c:>3}: AP {_fmt(ap)}  (gt {report.gt_per_class.get(c, 0)})")
    lines.append(f"mAP previous:    {_fmt(report.map_previous)}")
    lines.append(f"mAP current:     {_fmt(report.map_current)}")
    lines.append(f"mAP both:        {_fmt(report.map_both)}")
    lines.append(f"U-Recall:        {_fmt(report.u_recall)}")
    wi_line = f"WI:              {_fmt(report.wi)}"
    if report.wi_note:
        wi_line += f"  ({report.wi_note})"
    lines.append(wi_line)
    lines.append(f"A-OSE:           {_fmt(report.a_ose)}")
    return "\n".join(lines) + "\n"
