"""Deformable-attention encoder-decoder over multi-scale features."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..autodiff import Tensor, ops
from .attention import MSDeformAttention, MultiHeadSelfAttention
from .backbone import MultiScaleFeatures
from .config import ModelConfig
from .params import ParamStore


@lru_cache(maxsize=32)
def sinusoid_positions(h: int, w: int, dim: int) -> np.ndarray:
    """Fixed 2-d sine/cosine position table, (h*w, dim)."""
    half = dim // 2
    quarter = max(half // 2, 1)
    freqs = 1.0 / (100.0 ** (np.arange(quarter) / quarter))
    ys, xs = np.mgrid[0:h, 0:w]
    ys = ys.reshape(-1, 1) / max(h - 1, 1)
    xs = xs.reshape(-1, 1) / max(w - 1, 1)
    parts = [
        np.sin(xs * freqs * np.pi),
        np.cos(ys * freqs * np.pi),
    ]
    table = np.concatenate(parts, axis=1)
    if table.shape[1] < dim:
        table = np.pad(table, ((0, 0), (0, dim - table.shape[1])))
    return table[:, :dim]


def level_reference_points(shapes) -> np.ndarray:
    """Normalized (x, y) cell-center locations of all level tokens."""
    refs = []
    for hh, ww in shapes:
        ys, xs = np.mgrid[0:hh, 0:ww]
        refs.append(
            np.stack([(xs.reshape(-1) + 0.5) / ww, (ys.reshape(-1) + 0.5) / hh], axis=1)
        )
    return np.concatenate(refs, axis=0)


class FeedForward:
    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        d, f = cfg.embed_dim, cfg.ffn_dim
        store.glorot(f"{prefix}.in.w", (d, f), d, f)
        store.zeros(f"{prefix}.in.b", (f,))
        store.glorot(f"{prefix}.out.w", (f, d), f, d)
        store.zeros(f"{prefix}.out.b", (d,))
        self.store, self.prefix = store, prefix

    def __call__(self, x: Tensor) -> Tensor:
        s, p = self.store, self.prefix
        hidden = ops.relu(ops.linear(x, s[f"{p}.in.w"], s[f"{p}.in.b"]))
        return ops.linear(hidden, s[f"{p}.out.w"], s[f"{p}.out.b"])


class Residual:
    """Post-norm residual block: LN(x + sublayer)."""

    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        store.ones(f"{prefix}.gain", (cfg.embed_dim,))
        store.zeros(f"{prefix}.bias", (cfg.embed_dim,))
        self.store, self.prefix = store, prefix

    def __call__(self, x: Tensor, sub: Tensor) -> Tensor:
        s, p = self.store, self.prefix
        return ops.layer_norm(ops.add(x, sub), s[f"{p}.gain"], s[f"{p}.bias"])


class EncoderLayer:
    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        self.attn = MSDeformAttention(cfg, store, f"{prefix}.msda")
        self.norm1 = Residual(cfg, store, f"{prefix}.norm1")
        self.ffn = FeedForward(cfg, store, f"{prefix}.ffn")
        self.norm2 = Residual(cfg, store, f"{prefix}.norm2")

    def __call__(self, tokens: Tensor, refs: np.ndarray, features: MultiScaleFeatures) -> Tensor:
        tokens = self.norm1(tokens, self.attn(tokens, refs, features))
        return self.norm2(tokens, self.ffn(tokens))


class DecoderLayer:
    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        self.self_attn = MultiHeadSelfAttention(cfg, store, f"{prefix}.self")
        self.norm1 = Residual(cfg, store, f"{prefix}.norm1")
        self.cross_attn = MSDeformAttention(cfg, store, f"{prefix}.cross")
        self.norm2 = Residual(cfg, store, f"{prefix}.norm2")
        self.ffn = FeedForward(cfg, store, f"{prefix}.ffn")
        self.norm3 = Residual(cfg, store, f"{prefix}.norm3")

    def __call__(self, queries, refs, memory: MultiScaleFeatures) -> Tensor:
        queries = self.norm1(queries, self.self_attn(queries))
        queries = self.norm2(queries, self.cross_attn(queries, refs, memory))
        return self.norm3(queries, self.ffn(queries))


class Transformer:
    """Encoder refines level tokens; decoder turns M learnable queries
    into query embeddings, each with a reference point predicted from
    its own initial embedding (single point, no iterative refinement)."""

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        self.store = store
        d = cfg.embed_dim
        store.create(
            "query.embed", store.rng.normal(scale=0.5, size=(cfg.num_queries, d))
        )
        store.create("query.ref.w", store.rng.uniform(-0.1, 0.1, size=(d, 2)))
        store.zeros("query.ref.b", (2,))
        store.create("level.embed", store.rng.normal(scale=0.1, size=(cfg.levels, d)))
        self.enc_layers = [
            EncoderLayer(cfg, store, f"encoder.{i}") for i in range(cfg.enc_layers)
        ]
        self.dec_layers = [
            DecoderLayer(cfg, store, f"decoder.{i}") for i in range(cfg.dec_layers)
        ]

    def _flatten_with_pos(self, features: MultiScaleFeatures) -> Tensor:
        d = self.cfg.embed_dim
        pieces = []
        for lvl, level_map in enumerate(features.levels):
            _, hh, ww = level_map.shape
            tokens = ops.transpose(ops.reshape(level_map, (d, hh * ww)))
            pos = Tensor(sinusoid_positions(hh, ww, d))
            tokens = ops.add(tokens, pos)
            level_vec = ops.narrow(self.store["level.embed"], 0, lvl, 1)
            tokens = ops.add(tokens, ops.reshape(level_vec, (d,)))
            pieces.append(tokens)
        return ops.concat(pieces, axis=0)

    def _tokens_to_maps(self, tokens: Tensor, shapes) -> MultiScaleFeatures:
        d = self.cfg.embed_dim
        maps = []
        start = 0
        for hh, ww in shapes:
            n = hh * ww
            chunk = ops.narrow(tokens, 0, start, n)
            maps.append(ops.reshape(ops.transpose(chunk), (d, hh, ww)))
            start += n
        return MultiScaleFeatures(maps)

    def forward(self, features: MultiScaleFeatures) -> tuple[Tensor, np.ndarray]:
        """Returns (query embeddings (M, D), reference points (M, 2))."""
        shapes = features.shapes
        tokens = self._flatten_with_pos(features)
        token_refs = level_reference_points(shapes)
        for layer in self.enc_layers:
            tokens = layer(tokens, token_refs, self._tokens_to_maps(tokens, shapes))
        memory = self._tokens_to_maps(tokens, shapes)

        queries = self.store["query.embed"]
        ref_logits = ops.linear(queries, self.store["query.ref.w"], self.store["query.ref.b"])
        refs = ops.sigmoid(ref_logits)  # trained through the sampling coords
        x = queries
        for layer in self.dec_layers:
            x = layer(x, refs, memory)
        return x, refs.data
