"""Checkpoint container: a text header followed by a little-endian float64 payload.

Layout::

    FASTDSAC-CHECKPOINT\\n
    {"config": ..., "config_hash": ..., "format_version": 1, "manifest": [...], ...}\\n
    <payload bytes>

The header is a single line of compact, key-sorted JSON.  Each manifest row
names one array (``<store>/<param|m|v>/<name>``), its shape, and its byte
offset into the payload.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .actor import Actor
from .config import RunConfig, config_hash, from_dict
from .envs import make_env
from .errors import CheckpointError, FastDSACError

MAGIC = b"FASTDSAC-CHECKPOINT\n"
FORMAT_VERSION = 1
STORE_ORDER = ("actor", "critic0", "critic1", "target0", "target1")


@dataclass
class Checkpoint:
    config: dict
    step: int
    stores: dict[str, nn.ParamStore]
    extra: dict = field(default_factory=dict)

    def run_config(self) -> RunConfig:
        return from_dict(self.config)


def from_trainer(trainer, run_config: RunConfig) -> Checkpoint:
    stores = {"actor": trainer.actor.params}
    for i, (online, target) in enumerate(zip(trainer.critics.online, trainer.critics.target)):
        stores[f"critic{i}"] = online.params
        stores[f"target{i}"] = target.params
    a = trainer.alpha_state
    extra = {
        "log_alpha": a.log_alpha,
        "alpha_m": a.m,
        "alpha_v": a.v,
        "alpha_t": a.t,
        "update_count": trainer.update_count,
    }
    return Checkpoint(run_config.to_dict(), trainer.step_count, stores, extra)


def encode(ckpt: Checkpoint) -> bytes:
    manifest, chunks, offset = [], [], 0
    step_counts = {}
    for name in sorted(ckpt.stores, key=_store_key):
        store = ckpt.stores[name]
        rows, payload = store.to_fragment(name, offset)
        manifest.extend(rows)
        chunks.append(payload)
        offset += len(payload)
        step_counts[name] = store.step_count
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash(ckpt.config),
        "config": ckpt.config,
        "step": ckpt.step,
        "extra": ckpt.extra,
        "step_counts": step_counts,
        "manifest": manifest,
        "payload_bytes": offset,
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + line + b"\n" + b"".join(chunks)


def _store_key(name: str):
    return (STORE_ORDER.index(name) if name in STORE_ORDER else len(STORE_ORDER), name)


def decode(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic line)")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[len(MAGIC) : end])
        version = header["format_version"]
        manifest = header["manifest"]
        cfg = header["config"]
        size = int(header["payload_bytes"])
        step = int(header["step"])
        step_counts = header["step_counts"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    if header.get("config_hash") != config_hash(cfg):
        raise CheckpointError("config hash does not match the stored config")
    payload = blob[end + 1 :]
    if len(payload) != size:
        raise CheckpointError(f"payload holds {len(payload)} bytes, header says {size}")
    _check_layout(manifest, size)
    try:
        stores = {
            name: nn.ParamStore.from_fragment(name, manifest, payload, int(count))
            for name, count in step_counts.items()
        }
    except (FastDSACError, ValueError, KeyError) as exc:
        raise CheckpointError(f"bad checkpoint tensor: {exc}") from None
    return Checkpoint(cfg, step, stores, header.get("extra", {}))


def _check_layout(manifest, size: int) -> None:
    spans = []
    for row in manifest:
        try:
            shape = [int(d) for d in row["shape"]]
            start = int(row["offset"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointError(f"bad manifest row {row!r}") from None
        if any(d < 0 for d in shape) or start < 0:
            raise CheckpointError(f"bad manifest row {row!r}")
        spans.append((start, start + 8 * int(np.prod(shape, dtype=np.int64)), row["name"]))
    spans.sort()
    cursor = 0
    for start, stop, name in spans:
        if start < cursor:
            raise CheckpointError(f"array {name} overlaps its predecessor")
        if stop > size:
            raise CheckpointError(f"array {name} runs past the payload")
        cursor = stop


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(ckpt))
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode(blob)


def restore_actor(ckpt: Checkpoint) -> Actor:
    cfg = ckpt.run_config()
    spec = make_env(cfg.env, cfg.env_params, 0).spec
    if "actor" not in ckpt.stores:
        raise CheckpointError("checkpoint has no actor store")
    try:
        return Actor(
            spec.obs_dim, spec.action_dim, cfg.train.hidden_widths, cfg.train.use_layer_norm,
            cfg.dem, params=ckpt.stores["actor"],
        )
    except FastDSACError as exc:
        raise CheckpointError(f"actor parameters do not fit the stored config: {exc}") from None
