"""Detection extraction: global top-k over the flattened class scores."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, no_grad, reset_tape
from ..data.boxes import BoundingBox
from ..matching import MIN_BOX_SIDE
from ..metrics import Detection
from .state import EpisodeState, Hyper


def infer(state: EpisodeState, pixels, hyper: Hyper) -> list[Detection]:
    """Top-k detections for one image, sorted by score (ties: flat index).

    Scores are per-class sigmoids over all (query, class) pairs
    including the unknown column; k caps at that score count. With
    novelty classification disabled the unknown column is excluded, so
    the model can never emit label 0.
    """
    with no_grad():
        outputs, _ = state.detector.forward(Tensor(pixels))
    reset_tape()
    logits = outputs.class_logits.data
    boxes = outputs.boxes.data
    m, width = logits.shape
    scores = 1.0 / (1.0 + np.exp(-logits))
    if hyper.score_fusion:
        scores = scores * outputs.objectness.data[:, None]
    col_offset = 0
    if not hyper.novelty_classification:
        scores = scores[:, 1:]
        col_offset = 1
        width -= 1

    flat = scores.reshape(-1)
    k = min(hyper.top_k, flat.size)
    order = np.lexsort((np.arange(flat.size), -flat))[:k]
    detections = []
    for flat_idx in order:
        q, col = divmod(int(flat_idx), width)
        label = state.label_space.label_of_column(col + col_offset)
        cx, cy, w, h = boxes[q]
        detections.append(
            Detection(
                label=label,
                score=float(flat[flat_idx]),
                box=BoundingBox(cx, cy, max(w, MIN_BOX_SIDE), max(h, MIN_BOX_SIDE)),
            )
        )
    return detections
