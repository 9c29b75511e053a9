"""Tiny strided conv backbone producing multi-scale features.

Stride schedule: stem halves the input, then each level stage halves
again, so level 0 sits at stride 4 (the finest map), level 1 at 8, and
so on. Level maps are 1x1-projected to the embedding width; the
post-ReLU pre-projection map of the configured stage feeds the
attention map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ShapeError
from .config import ModelConfig
from .params import ParamStore


@dataclass
class MultiScaleFeatures:
    """Per-level (D, h_l, w_l) maps, finest first."""

    levels: list[Tensor]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [(t.shape[1], t.shape[2]) for t in self.levels]


class Backbone:
    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        c_stem, c_body, d = cfg.stem_channels, cfg.backbone_channels, cfg.embed_dim
        k = 3
        store.glorot("backbone.stem.w", (c_stem, 3, k, k), 3 * k * k, c_stem * k * k)
        store.zeros("backbone.stem.b", (c_stem,))
        for lvl in range(cfg.levels):
            c_in = c_stem if lvl == 0 else c_body
            store.glorot(
                f"backbone.stage{lvl}.w", (c_body, c_in, k, k), c_in * k * k, c_body * k * k
            )
            store.zeros(f"backbone.stage{lvl}.b", (c_body,))
            store.glorot(f"backbone.proj{lvl}.w", (d, c_body, 1, 1), c_body, d)
            store.zeros(f"backbone.proj{lvl}.b", (d,))
        self.store = store

    def forward(self, pixels: Tensor) -> tuple[MultiScaleFeatures, Tensor]:
        """Returns (projected level maps, pre-projection attention stage)."""
        if pixels.ndim != 3 or pixels.shape[0] != 3:
            raise ShapeError(f"expected (3, H, W) pixels, got {pixels.shape}")
        _, h, w = pixels.shape
        if h < 16 or w < 16:
            raise ShapeError(f"input {h}x{w} too small; need at least 16x16")
        s = self.store
        x = ops.relu(ops.conv2d(pixels, s["backbone.stem.w"], s["backbone.stem.b"], stride=2, pad=1))
        levels = []
        raw = None
        for lvl in range(self.cfg.levels):
            x = ops.relu(
                ops.conv2d(x, s[f"backbone.stage{lvl}.w"], s[f"backbone.stage{lvl}.b"], stride=2, pad=1)
            )
            if lvl == self.cfg.attention_stage:
                raw = x
            levels.append(
                ops.conv2d(x, s[f"backbone.proj{lvl}.w"], s[f"backbone.proj{lvl}.b"], stride=1, pad=0)
            )
        return MultiScaleFeatures(levels), raw


def attention_map(raw) -> np.ndarray:
    """Channel mean of a (C, h, w) feature map.

    Used only to rank pseudo-label candidates, so it runs outside the
    tape.
    """
    data = raw.data if isinstance(raw, Tensor) else np.asarray(raw)
    return data.mean(axis=0)
