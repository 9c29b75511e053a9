"""Bipartite matching of object queries to ground-truth instances.

Cost weights follow the detection-transformer convention (class 2,
L1 5, GIoU 2) and are exposed in configuration. The assignment is a
minimum-cost injective map of ground-truth instances onto queries; by
construction every GT is matched exactly once when K <= M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data.boxes import BoundingBox, Instance
from .errors import CapacityError, ContractError

COST_CLASS_DEFAULT = 2.0
COST_L1_DEFAULT = 5.0
COST_GIOU_DEFAULT = 2.0

# Predicted boxes can collapse early in training; clamp before GIoU.
MIN_BOX_SIDE = 1e-6


@dataclass(frozen=True)
class MatchResult:
    """Injective assignment: pairs (query, gt) plus the leftover queries."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_queries: tuple[int, ...]
    num_queries: int

    def matched_query_indices(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.pairs)


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU in (-1, 1]."""
    return _giou_xyxy(a.corners(), b.corners())


def _giou_xyxy(a, b) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a <= 0.0 or area_b <= 0.0:
        raise ContractError("giou requires positive-area boxes")
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = area_a + area_b - inter
    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    enclose = ew * eh
    return inter / union - (enclose - union) / enclose


def build_cost_matrix(
    outputs,
    gts: list[Instance],
    label_columns: dict[int, int],
    w_cls: float = COST_CLASS_DEFAULT,
    w_l1: float = COST_L1_DEFAULT,
    w_giou: float = COST_GIOU_DEFAULT,
) -> np.ndarray:
    """(M, K) matching cost; not differentiated through.

    cost(i, j) = w_cls * (-sigma(logit of gt j's class for query i))
               + w_l1 * |box_i - box_j|_1
               + w_giou * (1 - giou(box_i, box_j))

    ``label_columns`` maps each known class id to its classifier column.
    """
    logits = outputs.class_logits.data
    boxes = outputs.boxes.data
    m = logits.shape[0]
    k = len(gts)
    cost = np.zeros((m, k))
    if k == 0:
        return cost

    probs = 1.0 / (1.0 + np.exp(-logits))
    gt_boxes = np.array([[g.box.cx, g.box.cy, g.box.w, g.box.h] for g in gts])
    columns = []
    for g in gts:
        if g.label not in label_columns:
            raise ContractError(f"gt label {g.label} is not a known class")
        columns.append(label_columns[g.label])

    pred = boxes.copy()
    pred[:, 2:] = np.maximum(pred[:, 2:], MIN_BOX_SIDE)
    pred_xyxy = np.stack(
        [
            pred[:, 0] - pred[:, 2] / 2,
            pred[:, 1] - pred[:, 3] / 2,
            pred[:, 0] + pred[:, 2] / 2,
            pred[:, 1] + pred[:, 3] / 2,
        ],
        axis=1,
    )
    for j, g in enumerate(gts):
        cost[:, j] -= w_cls * probs[:, columns[j]]
        cost[:, j] += w_l1 * np.abs(pred - gt_boxes[j]).sum(axis=1)
        gx = (
            g.box.cx - g.box.w / 2,
            g.box.cy - g.box.h / 2,
            g.box.cx + g.box.w / 2,
            g.box.cy + g.box.h / 2,
        )
        for i in range(m):
            cost[i, j] += w_giou * (1.0 - _giou_xyxy(pred_xyxy[i], gx))
    return cost


def hungarian_assign(cost: np.ndarray) -> MatchResult:
    """Minimum-total-cost injective assignment of columns (GTs) to rows."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractError(f"cost matrix must be 2-d, got shape {cost.shape}")
    m, k = cost.shape
    if k > m:
        raise CapacityError(f"{k} ground-truth instances exceed {m} queries")
    if k == 0:
        return MatchResult((), tuple(range(m)), m)
    if not np.all(np.isfinite(cost)):
        raise ContractError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted(zip((int(r) for r in rows), (int(c) for c in cols))))
    matched = {q for q, _ in pairs}
    unmatched = tuple(q for q in range(m) if q not in matched)
    return MatchResult(pairs, unmatched, m)
