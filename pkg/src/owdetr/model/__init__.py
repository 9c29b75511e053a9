"""Reduced-fidelity deformable-attention detector."""

from .backbone import Backbone, MultiScaleFeatures, attention_map
from .config import ModelConfig
from .detector import Detector
from .heads import HeadOutputs, Heads
from .params import ParamStore
from .transformer import Transformer

__all__ = [
    "Backbone",
    "Detector",
    "HeadOutputs",
    "Heads",
    "ModelConfig",
    "MultiScaleFeatures",
    "ParamStore",
    "Transformer",
    "attention_map",
]
