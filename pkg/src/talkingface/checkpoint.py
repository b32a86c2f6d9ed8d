"""Versioned checkpoint container.

A checkpoint is a zip archive with two members:

``manifest.json``
    format tag, version, architecture profile, bank size, free-form metadata
    and an index of tensors (name, shape, byte offset).
``tensors.bin``
    the tensors back to back as raw little-endian float32.
"""

from __future__ import annotations

import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import torch

FORMAT = "talkingface-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict, meta: dict) -> None:
    index = []
    chunks = []
    offset = 0
    for name, t in tensors.items():
        arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
        if arr.dtype != np.float32:
            raise CheckpointError(f"tensor {name!r} has dtype {arr.dtype}; only float32 is stored")
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT, "version": VERSION, "tensors": index, **meta}

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest, indent=1))
            zf.writestr("tensors.bin", b"".join(chunks))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def read_manifest(path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {manifest.get('version')} unsupported (expected {VERSION})")
    return manifest


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(tensors, manifest)``; tensors are float32 CPU tensors."""
    manifest = read_manifest(path)
    with zipfile.ZipFile(path) as zf:
        blob = zf.read("tensors.bin")
    tensors = {}
    for entry in manifest["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        expected = 4 * int(np.prod(entry["shape"], dtype=np.int64))
        if n != expected or start + n > len(blob):
            raise CheckpointError(f"{path}: tensor {entry['name']!r} is truncated or malformed")
        arr = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=start).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.astype(np.float32))
    return tensors, manifest


def split_prefix(tensors: dict, prefix: str) -> dict:
    p = prefix + "/"
    return {k[len(p):]: v for k, v in tensors.items() if k.startswith(p)}


def load_module_state(module: torch.nn.Module, state: dict, what: str = "module") -> None:
    """Strict load with shape checks that name the first mismatching tensor."""
    own = module.state_dict()
    missing = sorted(set(own) - set(state))
    extra = sorted(set(state) - set(own))
    if missing or extra:
        raise CheckpointError(f"{what}: checkpoint does not match architecture "
                              f"(missing {missing[:3]}, unexpected {extra[:3]})")
    for k, v in own.items():
        if tuple(v.shape) != tuple(state[k].shape):
            raise CheckpointError(f"{what}: shape mismatch for {k}: checkpoint {tuple(state[k].shape)}, "
                                  f"model {tuple(v.shape)}")
    module.load_state_dict(state)
