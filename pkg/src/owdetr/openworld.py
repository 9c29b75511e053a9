"""Attention-driven pseudo-labeling, training targets, and loss terms.

The objectness score of a box is the mean of the backbone attention map
over the box window. Unmatched queries are ranked by that score and the
top k_u become pseudo-unknowns (class label 0). Matched knowns and
pseudo-unknowns together form the foreground for the objectness branch;
everything else is background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .data.boxes import BoundingBox, Instance
from .errors import BoxOutsideGridError, ContractError, DivergenceError
from .matching import MatchResult, MIN_BOX_SIDE

BACKGROUND = -1
UNKNOWN_CLASS = 0

FOCAL_GAMMA_DEFAULT = 2.0
FOCAL_ALPHA_DEFAULT = 0.25
OBJECTNESS_WEIGHT_DEFAULT = 0.1  # alpha in the joint loss
PSEUDO_PER_IMAGE_DEFAULT = 5  # k_u


@dataclass(frozen=True)
class PseudoLabelSet:
    """Unmatched queries promoted to unknown, highest score first."""

    query_indices: tuple[int, ...]
    scores: tuple[float, ...]

    def __len__(self):
        return len(self.query_indices)


@dataclass(frozen=True)
class TrainingTargets:
    """Per-query supervision for one image.

    class_labels holds raw class ids (0 = unknown, BACKGROUND sentinel
    for background queries); the mapping to classifier columns happens
    at loss assembly. Box targets exist only for matched known queries.
    """

    class_labels: tuple[int, ...]
    objectness: tuple[int, ...]
    box_pairs: tuple[tuple[int, BoundingBox], ...]


def objectness_score(
    attention: np.ndarray,
    box: BoundingBox,
    mode: str = "center",
) -> float:
    """Mean of the attention map inside the box window.

    The normalized box is mapped onto the (h, w) grid and clipped.
    mode="center": average over cells whose centers fall in the
    half-open window; when the clipped window catches no cell center,
    the cell containing the window's midpoint is used. mode="area":
    cells weighted by their fractional overlap with the window.
    """
    h, w = attention.shape
    x1 = (box.cx - box.w / 2.0) * w
    x2 = (box.cx + box.w / 2.0) * w
    y1 = (box.cy - box.h / 2.0) * h
    y2 = (box.cy + box.h / 2.0) * h
    cx1, cx2 = max(x1, 0.0), min(x2, float(w))
    cy1, cy2 = max(y1, 0.0), min(y2, float(h))
    if cx1 >= cx2 or cy1 >= cy2:
        raise BoxOutsideGridError(
            f"box window [{x1:.3f},{x2:.3f})x[{y1:.3f},{y2:.3f}) misses the {h}x{w} grid"
        )

    if mode == "center":
        j0 = int(np.ceil(cx1 - 0.5))
        j1 = int(np.ceil(cx2 - 0.5))  # exclusive
        i0 = int(np.ceil(cy1 - 0.5))
        i1 = int(np.ceil(cy2 - 0.5))
        j0, i0 = max(j0, 0), max(i0, 0)
        j1, i1 = min(j1, w), min(i1, h)
        if j0 >= j1 or i0 >= i1:
            j = min(w - 1, max(0, int((cx1 + cx2) / 2.0)))
            i = min(h - 1, max(0, int((cy1 + cy2) / 2.0)))
            return float(attention[i, j])
        window = attention[i0:i1, j0:j1]
        return float(window.mean())

    if mode == "area":
        total = 0.0
        weight = 0.0
        for i in range(int(np.floor(cy1)), int(np.ceil(cy2))):
            for j in range(int(np.floor(cx1)), int(np.ceil(cx2))):
                overlap = (min(j + 1.0, cx2) - max(float(j), cx1)) * (
                    min(i + 1.0, cy2) - max(float(i), cy1)
                )
                if overlap > 0.0:
                    total += overlap * attention[i, j]
                    weight += overlap
        return float(total / weight)

    raise ContractError(f"unknown objectness window mode {mode!r}")


def select_pseudo_unknowns(
    outputs,
    match: MatchResult,
    attention: np.ndarray,
    k_u: int = PSEUDO_PER_IMAGE_DEFAULT,
    mode: str = "center",
) -> PseudoLabelSet:
    """Top-k_u unmatched queries by objectness score (ties: lower index).

    Queries whose predicted boxes fall fully outside the grid are
    excluded before ranking.
    """
    if k_u < 0:
        raise ContractError(f"k_u must be >= 0, got {k_u}")
    boxes = outputs.boxes.data
    scored: list[tuple[float, int]] = []
    for q in match.unmatched_queries:
        cx, cy, bw, bh = boxes[q]
        try:
            box = BoundingBox(cx, cy, max(bw, MIN_BOX_SIDE), max(bh, MIN_BOX_SIDE))
            s = objectness_score(attention, box, mode=mode)
        except (BoxOutsideGridError, ContractError):
            continue
        scored.append((s, q))
    scored.sort(key=lambda t: (-t[0], t[1]))
    keep = scored[:k_u]
    return PseudoLabelSet(
        query_indices=tuple(q for _, q in keep),
        scores=tuple(s for s, _ in keep),
    )


def build_training_targets(
    match: MatchResult,
    gts: list[Instance],
    pseudo: PseudoLabelSet,
) -> TrainingTargets:
    """Compose per-query targets from the match and the pseudo set."""
    overlap = set(match.matched_query_indices()) & set(pseudo.query_indices)
    if overlap:
        raise ContractError(f"queries {sorted(overlap)} are both matched and pseudo-labeled")
    m = match.num_queries
    class_labels = [BACKGROUND] * m
    objectness = [0] * m
    box_pairs = []
    for q, g in match.pairs:
        class_labels[q] = gts[g].label
        objectness[q] = 1
        box_pairs.append((q, gts[g].box))
    for q in pseudo.query_indices:
        class_labels[q] = UNKNOWN_CLASS
        objectness[q] = 1
    return TrainingTargets(
        class_labels=tuple(class_labels),
        objectness=tuple(objectness),
        box_pairs=tuple(box_pairs),
    )


def focal_loss(
    logits: Tensor,
    target_columns,
    gamma: float = FOCAL_GAMMA_DEFAULT,
    alpha_bal: float = FOCAL_ALPHA_DEFAULT,
) -> Tensor:
    """Per-class sigmoid focal loss, summed, / max(1, #foreground).

    ``target_columns`` holds one column index per row, or BACKGROUND
    for an all-negative row. Positive cells are weighted alpha_bal and
    scaled by (1-p)^gamma; negative cells are unweighted and scaled by
    p^gamma, so gamma=0, alpha_bal=1 is exactly binary cross-entropy.
    """
    n, c = logits.shape
    onehot = np.zeros((n, c))
    n_fg = 0
    for i, col in enumerate(target_columns):
        if col == BACKGROUND:
            continue
        if not (0 <= col < c):
            raise ContractError(f"target column {col} outside 0..{c - 1}")
        onehot[i, col] = 1.0
        n_fg += 1
    pos = Tensor(onehot)
    neg = Tensor(1.0 - onehot)
    p = ops.sigmoid(logits)
    pos_term = ops.mul(pos, ops.mul(ops.power(ops.sub(1.0, p), gamma), ops.log(p)))
    neg_term = ops.mul(neg, ops.mul(ops.power(p, gamma), ops.log(ops.sub(1.0, p))))
    total = ops.neg(ops.add(ops.scale(ops.sum_(pos_term), alpha_bal), ops.sum_(neg_term)))
    return ops.scale(total, 1.0 / max(1, n_fg))


def box_regression_terms(
    pred_boxes: Tensor,
    match_box_pairs,
) -> tuple[Tensor, Tensor]:
    """(mean L1 distance, mean (1 - GIoU)) over matched pairs."""
    if not match_box_pairs:
        zero = Tensor(0.0)
        return zero, zero
    indices = [q for q, _ in match_box_pairs]
    targets = np.array([[b.cx, b.cy, b.w, b.h] for _, b in match_box_pairs])
    pred = ops.gather_rows(pred_boxes, indices)
    diff = ops.abs_(ops.sub(pred, Tensor(targets)))
    l1 = ops.mean(ops.sum_(diff, axis=1))

    sizes = ops.clamp_min(ops.narrow(pred, 1, 2, 2), MIN_BOX_SIDE)
    half = ops.scale(sizes, 0.5)
    centers = ops.narrow(pred, 1, 0, 2)
    p1 = ops.sub(centers, half)
    p2 = ops.add(centers, half)
    t1 = Tensor(targets[:, :2] - targets[:, 2:] / 2.0)
    t2 = Tensor(targets[:, :2] + targets[:, 2:] / 2.0)

    inter_wh = ops.clamp_min(ops.sub(ops.minimum(p2, t2), ops.maximum(p1, t1)), 0.0)
    inter = _prod_cols(inter_wh)
    area_p = _prod_cols(ops.sub(p2, p1))
    area_t = Tensor(np.prod(targets[:, 2:], axis=1))
    union = ops.sub(ops.add(area_p, area_t), inter)
    enc_wh = ops.sub(ops.maximum(p2, t2), ops.minimum(p1, t1))
    enclose = _prod_cols(enc_wh)
    giou_vals = ops.sub(ops.div(inter, union), ops.div(ops.sub(enclose, union), enclose))
    giou_term = ops.mean(ops.sub(1.0, giou_vals))
    return l1, giou_term


def _prod_cols(xy: Tensor) -> Tensor:
    return ops.mul(
        ops.reshape(ops.narrow(xy, 1, 0, 1), (-1,)),
        ops.reshape(ops.narrow(xy, 1, 1, 1), (-1,)),
    )


def l1_box_loss(
    pred_boxes: Tensor,
    match_box_pairs,
    l1_weight: float = 5.0,
    giou_weight: float = 2.0,
) -> Tensor:
    """Weighted box regression loss; zero when nothing is matched."""
    l1, giou_term = box_regression_terms(pred_boxes, match_box_pairs)
    return ops.add(ops.scale(l1, l1_weight), ops.scale(giou_term, giou_weight))


def joint_loss(l_n: Tensor, l_r: Tensor, l_o: Tensor, alpha: float = OBJECTNESS_WEIGHT_DEFAULT) -> Tensor:
    """Novelty + regression + alpha * objectness."""
    for name, term in (("novelty", l_n), ("regression", l_r), ("objectness", l_o)):
        if not np.all(np.isfinite(term.data)):
            raise DivergenceError(f"{name} loss is non-finite")
    return ops.add(ops.add(l_n, l_r), ops.scale(l_o, alpha))
