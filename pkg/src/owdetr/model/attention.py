"""Attention layers: standard multi-head self-attention over queries and
multi-scale deformable attention over feature maps."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from .config import ModelConfig
from .params import ParamStore


class MultiHeadSelfAttention:
    """Full softmax attention among a token set (used by the decoder)."""

    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        d = cfg.embed_dim
        self.heads = cfg.heads
        self.head_dim = d // cfg.heads
        self.prefix = prefix
        self.store = store
        for name in ("q", "k", "v", "out"):
            store.glorot(f"{prefix}.{name}.w", (d, d), d, d)
            store.zeros(f"{prefix}.{name}.b", (d,))

    def __call__(self, x: Tensor) -> Tensor:
        s, p = self.store, self.prefix
        q = ops.linear(x, s[f"{p}.q.w"], s[f"{p}.q.b"])
        k = ops.linear(x, s[f"{p}.k.w"], s[f"{p}.k.b"])
        v = ops.linear(x, s[f"{p}.v.w"], s[f"{p}.v.b"])
        scale = 1.0 / np.sqrt(self.head_dim)
        head_outs = []
        for h in range(self.heads):
            lo = h * self.head_dim
            qh = ops.narrow(q, 1, lo, self.head_dim)
            kh = ops.narrow(k, 1, lo, self.head_dim)
            vh = ops.narrow(v, 1, lo, self.head_dim)
            scores = ops.scale(ops.matmul(qh, ops.transpose(kh)), scale)
            attn = ops.softmax(scores)
            head_outs.append(ops.matmul(attn, vh))
        merged = ops.concat(head_outs, axis=1)
        return ops.linear(merged, s[f"{p}.out.w"], s[f"{p}.out.b"])


class MSDeformAttention:
    """Each query samples P offset points per head per level.

    Per head, the L*P attention logits predicted from the query are
    softmax-normalized jointly; sampled head-sliced values are combined
    by the weights and merged through an output projection. Offset
    biases start as a dispersed polar pattern so initial samples do not
    collapse onto the reference point.
    """

    def __init__(self, cfg: ModelConfig, store: ParamStore, prefix: str):
        d = cfg.embed_dim
        self.cfg = cfg
        self.heads = cfg.heads
        self.head_dim = d // cfg.heads
        self.levels = cfg.levels
        self.points = cfg.points
        self.prefix = prefix
        self.store = store
        n_slots = cfg.heads * cfg.levels * cfg.points
        store.glorot(f"{prefix}.value.w", (d, d), d, d)
        store.zeros(f"{prefix}.value.b", (d,))
        store.create(
            f"{prefix}.offset.w",
            store.rng.uniform(-0.01, 0.01, size=(d, n_slots * 2)),
        )
        store.create(f"{prefix}.offset.b", self._dispersed_offsets())
        store.glorot(f"{prefix}.weight.w", (d, n_slots), d, n_slots)
        store.zeros(f"{prefix}.weight.b", (n_slots,))
        store.glorot(f"{prefix}.out.w", (d, d), d, d)
        store.zeros(f"{prefix}.out.b", (d,))

    def _dispersed_offsets(self) -> np.ndarray:
        bias = np.zeros((self.heads, self.levels, self.points, 2))
        for h in range(self.heads):
            angle = 2.0 * np.pi * h / self.heads
            direction = np.array([np.cos(angle), np.sin(angle)])
            for lvl in range(self.levels):
                for p in range(self.points):
                    bias[h, lvl, p] = direction * (p + 1)
        return bias.reshape(-1)

    def __call__(self, queries: Tensor, ref_points, features) -> Tensor:
        """queries (M, D); ref_points (M, 2) normalized [0,1]; per-level maps.

        ref_points may be a Tensor (decoder: learned, gradients flow
        through the sampling coordinates) or a plain array (encoder:
        fixed token locations).
        """
        s, p = self.store, self.prefix
        m = queries.shape[0]
        lp = self.levels * self.points
        refs_taped = isinstance(ref_points, Tensor)

        offsets = ops.linear(queries, s[f"{p}.offset.w"], s[f"{p}.offset.b"])
        offsets = ops.reshape(offsets, (m, self.heads, self.levels, self.points, 2))
        logits = ops.linear(queries, s[f"{p}.weight.w"], s[f"{p}.weight.b"])
        weights = ops.softmax(ops.reshape(logits, (m, self.heads, lp)))

        # Project values per level, keeping the (h*w, D) token layout.
        value_tokens = []
        for level_map in features.levels:
            d, hh, ww = level_map.shape
            tokens = ops.transpose(ops.reshape(level_map, (d, hh * ww)))
            value_tokens.append(ops.linear(tokens, s[f"{p}.value.w"], s[f"{p}.value.b"]))

        ones_row = Tensor(np.ones((1, self.head_dim)))
        repeat_idx = np.repeat(np.arange(m), self.points)
        shapes = features.shapes
        per_head = []
        for h in range(self.heads):
            level_samples = []
            for lvl, (hh, ww) in enumerate(shapes):
                head_vals = ops.narrow(value_tokens[lvl], 1, h * self.head_dim, self.head_dim)
                head_map = ops.reshape(ops.transpose(head_vals), (self.head_dim, hh, ww))
                if refs_taped:
                    scaled = ops.add(
                        ops.mul(ref_points, Tensor(np.array([float(ww), float(hh)]))),
                        Tensor(np.array([-0.5, -0.5])),
                    )
                    base_t = ops.gather_rows(scaled, repeat_idx)
                else:
                    base = np.stack(
                        [ref_points[:, 0] * ww - 0.5, ref_points[:, 1] * hh - 0.5], axis=1
                    )
                    base_t = Tensor(base[repeat_idx])
                off = ops.reshape(
                    ops.narrow(ops.narrow(offsets, 1, h, 1), 2, lvl, 1),
                    (m * self.points, 2),
                )
                coords = ops.add(base_t, off)
                sampled = ops.bilinear_sample(head_map, coords)  # (M*P, head_dim)
                level_samples.append(ops.reshape(sampled, (m, self.points, self.head_dim)))
            head_samples = ops.reshape(
                ops.concat(level_samples, axis=1), (m * lp, self.head_dim)
            )
            w_h = ops.reshape(ops.narrow(weights, 1, h, 1), (m * lp, 1))
            w_tiled = ops.matmul(w_h, ones_row)  # (M*L*P, head_dim)
            weighted = ops.reshape(ops.mul(head_samples, w_tiled), (m, lp, self.head_dim))
            per_head.append(ops.sum_(weighted, axis=1))
        merged = ops.concat(per_head, axis=1)
        return ops.linear(merged, s[f"{p}.out.w"], s[f"{p}.out.b"])
