"""Checkpoint format: one JSON header line (schema version, config,
named-tensor directory with offsets, payload checksum) followed by raw
little-endian float64 blobs. Round trips are byte-exact."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ChecksumError, ContractError, TruncatedFileError, VersionError
from ..model import Detector, ModelConfig
from .optimizer import Adam
from .state import EpisodeState, ExemplarStore, LabelSpace

FORMAT_NAME = "owdetr-checkpoint"
FORMAT_VERSION = 1


def checkpoint_save(state: EpisodeState, path, config_hash: str = ""):
    path = Path(path)
    store = state.detector.store

    blobs: list[bytes] = []
    directory: list[dict] = []
    offset = 0

    def push(name: str, arr: np.ndarray):
        nonlocal offset
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)

    for name, tensor in store.items():
        push(f"param.{name}", tensor.data)
    for name in sorted(state.optimizer.m.keys()):
        push(f"adam.m.{name}", state.optimizer.m[name])
    for name in sorted(state.optimizer.v.keys()):
        push(f"adam.v.{name}", state.optimizer.v[name])

    payload = b"".join(blobs)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "model_config": asdict(state.detector.cfg),
        "label_space": {
            "known": list(state.label_space.known),
            "task_index": state.label_space.task_index,
            "history": [list(h) for h in state.label_space.history],
        },
        "counters": dict(state.counters),
        "rng_state": state.rng.bit_generator.state,
        "optimizer": {
            "lr": state.optimizer.lr,
            "beta1": state.optimizer.beta1,
            "beta2": state.optimizer.beta2,
            "eps": state.optimizer.eps,
            "weight_decay": state.optimizer.weight_decay,
            "step_count": state.optimizer.step_count,
        },
        "exemplars": state.exemplars.to_json_dict(),
        "tensors": directory,
        "payload_nbytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    path.write_bytes(header_line.encode("utf-8") + payload)


def checkpoint_load(path) -> EpisodeState:
    path = Path(path)
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise TruncatedFileError(f"{path}: no header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContractError(f"{path}: malformed checkpoint header: {e}") from e
    if header.get("format") != FORMAT_NAME:
        raise ContractError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {header.get('version')!r}")

    payload = raw[newline + 1 :]
    if len(payload) < header["payload_nbytes"]:
        raise TruncatedFileError(
            f"{path}: payload is {len(payload)} bytes, header promises {header['payload_nbytes']}"
        )
    payload = payload[: header["payload_nbytes"]]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")

    tensors: dict[str, np.ndarray] = {}
    for rec in header["tensors"]:
        start, nbytes = rec["offset"], rec["nbytes"]
        arr = np.frombuffer(payload[start : start + nbytes], dtype="<f8")
        tensors[rec["name"]] = arr.reshape(rec["shape"]).astype(np.float64)

    cfg = ModelConfig(**header["model_config"])
    ls = header["label_space"]
    label_space = LabelSpace(
        known=tuple(ls["known"]),
        task_index=ls["task_index"],
        history=tuple(tuple(h) for h in ls["history"]),
    )
    detector = Detector(cfg, n_known=max(1, len(label_space.known)))
    params = {
        name[len("param.") :]: arr
        for name, arr in tensors.items()
        if name.startswith("param.")
    }
    detector.store.load_state_dict(params)

    opt_meta = header["optimizer"]
    optimizer = Adam(
        lr=opt_meta["lr"],
        beta1=opt_meta["beta1"],
        beta2=opt_meta["beta2"],
        eps=opt_meta["eps"],
        weight_decay=opt_meta["weight_decay"],
    )
    optimizer.step_count = opt_meta["step_count"]
    optimizer.m = {
        name[len("adam.m.") :]: arr
        for name, arr in tensors.items()
        if name.startswith("adam.m.")
    }
    optimizer.v = {
        name[len("adam.v.") :]: arr
        for name, arr in tensors.items()
        if name.startswith("adam.v.")
    }

    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]

    return EpisodeState(
        detector=detector,
        label_space=label_space,
        exemplars=ExemplarStore.from_json_dict(header["exemplars"]),
        optimizer=optimizer,
        rng=rng,
        counters=dict(header["counters"]),
    )


def read_config_hash(path) -> str:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise TruncatedFileError(f"{path}: no header line")
    return json.loads(raw[:newline].decode("utf-8")).get("config_hash", "")
