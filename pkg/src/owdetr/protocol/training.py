"""Episodic training loop: per-image steps, oracle class additions,
exemplar memory, and replay finetuning."""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..autodiff import Tensor, backward, reset_tape
from ..data.boxes import Instance, LabeledImage
from ..data.manifest import DatasetManifest, load_ppm
from ..errors import ContractError, DivergenceError
from ..matching import build_cost_matrix, hungarian_assign
from ..model import Detector, ModelConfig
from ..openworld import (
    BACKGROUND,
    PseudoLabelSet,
    build_training_targets,
    focal_loss,
    joint_loss,
    l1_box_loss,
    select_pseudo_unknowns,
)
from ..autodiff import ops
from .optimizer import Adam
from .state import EpisodeState, ExemplarImage, ExemplarStore, Hyper, LabelSpace


def new_episode_state(model_cfg: ModelConfig, first_task_classes, hyper: Hyper, seed: int) -> EpisodeState:
    """Fresh state for task 1 with the first class set already known."""
    label_space = LabelSpace().add(first_task_classes)
    detector = Detector(model_cfg, n_known=len(label_space.known))
    optimizer = Adam(
        lr=hyper.lr,
        beta1=hyper.beta1,
        beta2=hyper.beta2,
        weight_decay=hyper.weight_decay,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x747261696E]))
    return EpisodeState(
        detector=detector,
        label_space=label_space,
        exemplars=ExemplarStore(cap=hyper.exemplar_cap),
        optimizer=optimizer,
        rng=rng,
        counters={"task_index": label_space.task_index, "epochs_trained": 0, "steps": 0},
    )


def load_training_items(manifest: DatasetManifest, data_root) -> list[LabeledImage]:
    """Materialize annotated images (pixels + instances) for training.

    Images without any annotation in this manifest view are skipped;
    they carry no matching signal.
    """
    data_root = Path(data_root)
    items = []
    for im in manifest.images:
        instances = manifest.instances_for(im.image_id)
        if not instances:
            continue
        pixels = load_ppm(data_root / im.file)
        items.append(LabeledImage(im.image_id, pixels, instances))
    return items


def training_step(state: EpisodeState, item: LabeledImage, hyper: Hyper) -> dict:
    """One forward/backward/update on a single image; returns loss parts."""
    columns = state.label_space.columns()
    for inst in item.instances:
        if inst.label not in columns:
            raise ContractError(
                f"image {item.image_id}: label {inst.label} outside the known set"
            )

    reset_tape()
    outputs, attention = state.detector.forward(Tensor(item.pixels))
    cost = build_cost_matrix(
        outputs, item.instances, columns, hyper.cost_class, hyper.cost_l1, hyper.cost_giou
    )
    match = hungarian_assign(cost)
    if hyper.novelty_classification:
        pseudo = select_pseudo_unknowns(outputs, match, attention, hyper.k_u)
    else:
        pseudo = PseudoLabelSet((), ())
    targets = build_training_targets(match, item.instances, pseudo)

    if hyper.novelty_classification:
        logits = outputs.class_logits
        cols = [
            BACKGROUND if lbl == BACKGROUND else (0 if lbl == 0 else columns[lbl])
            for lbl in targets.class_labels
        ]
    else:
        # Baseline: the unknown column stays untouched, as if absent.
        n_known = len(state.label_space.known)
        logits = ops.narrow(outputs.class_logits, 1, 1, n_known)
        cols = [
            BACKGROUND if lbl in (BACKGROUND, 0) else columns[lbl] - 1
            for lbl in targets.class_labels
        ]
    l_n = focal_loss(logits, cols, hyper.focal_gamma, hyper.focal_alpha)
    l_r = l1_box_loss(outputs.boxes, targets.box_pairs, hyper.loss_l1, hyper.loss_giou)
    if hyper.objectness:
        m = match.num_queries
        obj_logits = ops.reshape(outputs.objectness_logits, (m, 1))
        obj_cols = [0 if fg else BACKGROUND for fg in targets.objectness]
        l_o = focal_loss(obj_logits, obj_cols, hyper.focal_gamma, hyper.focal_alpha)
    else:
        l_o = Tensor(0.0)
    loss = joint_loss(l_n, l_r, l_o, hyper.alpha)
    backward(loss)
    state.optimizer.step(state.detector.store)
    state.detector.store.zero_grads()
    reset_tape()
    state.counters["steps"] = state.counters.get("steps", 0) + 1
    return {
        "l_n": l_n.item(),
        "l_r": l_r.item(),
        "l_o": l_o.item(),
        "loss": loss.item(),
    }


def train_task(
    state: EpisodeState,
    items: list[LabeledImage],
    hyper: Hyper,
    epochs: int | None = None,
    log_path=None,
) -> list[dict]:
    """Run SGD epochs over the items; returns per-epoch loss records.

    On a non-finite loss the state is rolled back to the last finished
    epoch and DivergenceError carries it as ``last_good``.
    """
    hyper.validate()
    epochs = hyper.epochs if epochs is None else epochs
    log_lines: list[dict] = []
    last_good = state.snapshot()
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(epochs):
            t_start = time.monotonic()
            order = state.rng.permutation(len(items))
            sums = {"l_n": 0.0, "l_r": 0.0, "l_o": 0.0, "loss": 0.0}
            try:
                for idx in order:
                    parts = training_step(state, items[int(idx)], hyper)
                    for k in sums:
                        sums[k] += parts[k]
            except DivergenceError as e:
                state.restore(last_good)
                raise DivergenceError(
                    f"epoch {epoch}: {e}; rolled back to last finished epoch",
                    last_good=state,
                ) from e
            n = max(1, len(items))
            record = {
                "epoch": state.counters.get("epochs_trained", 0),
                "l_n": sums["l_n"] / n,
                "l_r": sums["l_r"] / n,
                "l_o": sums["l_o"] / n,
                "loss": sums["loss"] / n,
                "wall_time": time.monotonic() - t_start,
            }
            state.counters["epochs_trained"] = record["epoch"] + 1
            log_lines.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
            last_good = state.snapshot()
    finally:
        if log_file:
            log_file.close()
    return log_lines


def oracle_step(state: EpisodeState, new_classes) -> EpisodeState:
    """Extend the known set with oracle-labeled classes; grow the head."""
    new_classes = tuple(new_classes)
    state.label_space = state.label_space.add(new_classes)  # validates disjoint
    state.detector.grow_classifier(len(new_classes), state.rng)
    state.counters["task_index"] = state.label_space.task_index
    return state


def build_exemplar_store(
    manifests: list[DatasetManifest],
    known,
    cap: int,
    seed: int,
) -> ExemplarStore:
    """Sample up to ``cap`` images per known class, without replacement.

    Each stored exemplar keeps only that class's boxes, so replay stays
    class-balanced.
    """
    if cap < 1:
        raise ContractError(f"exemplar cap must be >= 1, got {cap}")
    store = ExemplarStore(cap=cap)
    for c in sorted(set(known)):
        candidates: dict[int, ExemplarImage] = {}
        for manifest in manifests:
            for im in manifest.images:
                if im.image_id in candidates:
                    continue
                boxes = tuple(
                    a.bbox for a in manifest.annotations_for(im.image_id) if a.label == c
                )
                if boxes:
                    candidates[im.image_id] = ExemplarImage(
                        im.image_id, im.file, im.width, im.height, boxes
                    )
        ordered_ids = sorted(candidates.keys())
        if not ordered_ids:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        take = min(cap, len(ordered_ids))
        chosen = rng.choice(len(ordered_ids), size=take, replace=False)
        store.per_class[c] = [candidates[ordered_ids[int(i)]] for i in sorted(chosen)]
    return store


def exemplar_items(store: ExemplarStore, data_root) -> list[LabeledImage]:
    """Flatten the store into training items, class-by-class."""
    from ..data.boxes import box_from_pixels

    data_root = Path(data_root)
    items = []
    for c in sorted(store.per_class.keys()):
        for ex in store.per_class[c]:
            pixels = load_ppm(data_root / ex.file)
            instances = [
                Instance(c, box_from_pixels(x, y, w, h, ex.width, ex.height))
                for x, y, w, h in ex.boxes
            ]
            items.append(LabeledImage(ex.image_id, pixels, instances))
    return items


def incremental_finetune(
    state: EpisodeState,
    hyper: Hyper,
    data_root,
    log_path=None,
) -> list[dict]:
    """Replay finetuning over the exemplar store at lr / 10."""
    if state.exemplars.total() == 0:
        raise ContractError("exemplar store is empty; build it before finetuning")
    items = exemplar_items(state.exemplars, data_root)
    old_lr = state.optimizer.lr
    state.optimizer.lr = hyper.lr / 10.0
    try:
        return train_task(state, items, hyper, epochs=hyper.finetune_epochs, log_path=log_path)
    finally:
        state.optimizer.lr = old_lr
