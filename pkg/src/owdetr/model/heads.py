"""Prediction heads: classification (with unknown column 0), binary
objectness, and box regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ContractError
from .config import ModelConfig
from .params import ParamStore

# Initial box size of ~0.2 via the regression bias keeps early matching sane.
_BOX_BIAS_INIT = (0.0, 0.0, -1.386294361119890618834464, -1.386294361119890618834464)


@dataclass
class HeadOutputs:
    class_logits: Tensor  # (M, 1 + n_known); column 0 is the unknown class
    objectness_logits: Tensor  # (M,)
    objectness: Tensor  # (M,) sigmoid, in (0, 1)
    boxes: Tensor  # (M, 4) normalized cxcywh, strictly inside (0, 1)


class Heads:
    def __init__(self, cfg: ModelConfig, store: ParamStore, n_known: int):
        if n_known < 1:
            raise ContractError(f"n_known must be >= 1, got {n_known}")
        d = cfg.embed_dim
        self.store = store
        store.glorot("head.class.w", (d, 1 + n_known), d, 1 + n_known)
        store.zeros("head.class.b", (1 + n_known,))
        store.glorot("head.obj.w", (d, 1), d, 1)
        store.zeros("head.obj.b", (1,))
        store.glorot("head.box.0.w", (d, d), d, d)
        store.zeros("head.box.0.b", (d,))
        store.glorot("head.box.1.w", (d, d), d, d)
        store.zeros("head.box.1.b", (d,))
        store.glorot("head.box.2.w", (d, 4), d, 4)
        store.create("head.box.2.b", np.array(_BOX_BIAS_INIT))

    @property
    def n_known(self) -> int:
        return self.store["head.class.w"].shape[1] - 1

    def grow_classifier(self, n_new: int, rng: np.random.Generator):
        """Append columns for newly known classes (small seeded noise)."""
        if n_new <= 0:
            return
        w = self.store["head.class.w"].data
        b = self.store["head.class.b"].data
        d = w.shape[0]
        new_w = np.concatenate([w, rng.normal(scale=0.01, size=(d, n_new))], axis=1)
        new_b = np.concatenate([b, np.zeros(n_new)])
        self.store.replace("head.class.w", new_w)
        self.store.replace("head.class.b", new_b)

    def forward(self, query_embeddings: Tensor) -> HeadOutputs:
        s = self.store
        m = query_embeddings.shape[0]
        class_logits = ops.linear(query_embeddings, s["head.class.w"], s["head.class.b"])
        obj_logits = ops.reshape(
            ops.linear(query_embeddings, s["head.obj.w"], s["head.obj.b"]), (m,)
        )
        x = ops.relu(ops.linear(query_embeddings, s["head.box.0.w"], s["head.box.0.b"]))
        x = ops.relu(ops.linear(x, s["head.box.1.w"], s["head.box.1.b"]))
        boxes = ops.sigmoid(ops.linear(x, s["head.box.2.w"], s["head.box.2.b"]))
        return HeadOutputs(
            class_logits=class_logits,
            objectness_logits=obj_logits,
            objectness=ops.sigmoid(obj_logits),
            boxes=boxes,
        )
