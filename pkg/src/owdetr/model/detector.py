"""Full detector: backbone -> transformer -> heads."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from .backbone import Backbone, MultiScaleFeatures, attention_map
from .config import ModelConfig
from .heads import HeadOutputs, Heads
from .params import ParamStore
from .transformer import Transformer


class Detector:
    def __init__(self, cfg: ModelConfig, n_known: int):
        self.cfg = cfg
        self.store = ParamStore(cfg.seed)
        self.backbone = Backbone(cfg, self.store)
        self.transformer = Transformer(cfg, self.store)
        self.heads = Heads(cfg, self.store, n_known)

    @property
    def n_known(self) -> int:
        return self.heads.n_known

    def parameter_count(self) -> int:
        return self.store.count()

    def grow_classifier(self, n_new: int, rng: np.random.Generator):
        self.heads.grow_classifier(n_new, rng)

    def forward(self, pixels) -> tuple[HeadOutputs, np.ndarray]:
        """Run the network on a (3, H, W) image.

        Returns head outputs plus the attention map (channel mean of the
        configured backbone stage, detached: it only ranks pseudo-label
        candidates).
        """
        if not isinstance(pixels, Tensor):
            pixels = Tensor(pixels)
        features, raw = self.backbone.forward(pixels)
        query_embeddings, _refs = self.transformer.forward(features)
        outputs = self.heads.forward(query_embeddings)
        return outputs, attention_map(raw)

    def features_forward(self, pixels) -> tuple[MultiScaleFeatures, Tensor]:
        if not isinstance(pixels, Tensor):
            pixels = Tensor(pixels)
        return self.backbone.forward(pixels)
