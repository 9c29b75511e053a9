"""Episodic open-world training protocol."""

from .checkpoint import checkpoint_load, checkpoint_save, read_config_hash
from .inference import infer
from .optimizer import Adam
from .state import EpisodeState, ExemplarImage, ExemplarStore, Hyper, LabelSpace
from .training import (
    build_exemplar_store,
    exemplar_items,
    incremental_finetune,
    load_training_items,
    new_episode_state,
    oracle_step,
    train_task,
    training_step,
)

__all__ = [
    "Adam",
    "EpisodeState",
    "ExemplarImage",
    "ExemplarStore",
    "Hyper",
    "LabelSpace",
    "build_exemplar_store",
    "checkpoint_load",
    "checkpoint_save",
    "exemplar_items",
    "incremental_finetune",
    "infer",
    "load_training_items",
    "new_episode_state",
    "oracle_step",
    "read_config_hash",
    "train_task",
    "training_step",
]
