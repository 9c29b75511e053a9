"""Model hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32  # D
    num_queries: int = 20  # M
    levels: int = 2  # L feature levels
    points: int = 4  # P sampling points per level per head
    heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    stem_channels: int = 8
    backbone_channels: int = 16  # D', the pre-projection width
    ffn_dim: int = 64
    attention_stage: int = 0  # which level stage feeds the attention map (0 = finest)
    seed: int = 0

    def __post_init__(self):
        positive = {
            "embed_dim": self.embed_dim,
            "num_queries": self.num_queries,
            "levels": self.levels,
            "points": self.points,
            "heads": self.heads,
            "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers,
            "stem_channels": self.stem_channels,
            "backbone_channels": self.backbone_channels,
            "ffn_dim": self.ffn_dim,
        }
        for key, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{key} must be positive, got {value}")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if not (0 <= self.attention_stage < self.levels):
            raise ConfigError(
                f"attention_stage {self.attention_stage} outside 0..{self.levels - 1}"
            )
