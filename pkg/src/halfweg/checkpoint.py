"""Checkpoint files: a JSON manifest followed by raw little-endian float32 arrays.

Layout::

    HALFWEG-CKPT <version>\\n
    <manifest byte length>\\n
    <manifest JSON>
    <payload>

The manifest lists every array with its byte offset and shape, the model
and run configs, RNG state, counters and a CRC32 of the payload.
"""
from __future__ import annotations

import json
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .models import Ensemble, ModelConfig, ma_net, ms_net

MAGIC = "HALFWEG-CKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    ensemble: Ensemble
    config: dict = field(default_factory=dict)
    rng_state: dict | None = None
    iteration: int = 0
    extra: dict = field(default_factory=dict)


def _param_arrays(prefix: str, params: nn.ModelParams):
    for name, arr in params.tensors.items():
        yield f"{prefix}/param/{name}", arr
        yield f"{prefix}/adam_m/{name}", params.m[name]
        yield f"{prefix}/adam_v/{name}", params.v[name]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    ens = ckpt.ensemble
    entries, chunks, offset = [], [], 0
    for prefix, params in (("ma", ens.ma), ("ms", ens.ms)):
        for key, arr in _param_arrays(prefix, params):
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            entries.append({"name": key, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
            chunks.append(data)
            offset += len(data)
    payload = b"".join(chunks)
    manifest = {
        "format": MAGIC,
        "version": FORMAT_VERSION,
        "model": ens.cfg.to_dict(),
        "layers": {"ma": [l.to_dict() for l in ens.ma_layers], "ms": [l.to_dict() for l in ens.ms_layers]},
        "steps": {"ma": ens.ma.step, "ms": ens.ms.step},
        "arrays": entries,
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
        "config": ckpt.config,
        "rng_state": ckpt.rng_state,
        "iteration": ckpt.iteration,
        "extra": ckpt.extra,
    }
    header = json.dumps(manifest, sort_keys=True).encode()
    blob = f"{MAGIC} {FORMAT_VERSION}\n{len(header)}\n".encode() + header + payload
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    try:
        first, rest = raw.split(b"\n", 1)
        magic, version = first.decode().split(" ")
        length_line, rest = rest.split(b"\n", 1)
        header_len = int(length_line)
    except (ValueError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: not a checkpoint (corrupt header)") from None
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if int(version) != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    if len(rest) < header_len:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(rest[:header_len])
    except json.JSONDecodeError as err:
        raise CheckpointError(f"{path}: corrupt manifest ({err})") from None
    payload = rest[header_len:]
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} of {manifest['payload_bytes']} bytes)"
        )
    if zlib.crc32(payload) != manifest["payload_crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    cfg = ModelConfig(**manifest["model"])
    expected = {"ma": ma_net(cfg), "ms": ms_net(cfg)}
    arrays = {}
    for e in manifest["arrays"]:
        a = np.frombuffer(payload, dtype="<f4", count=int(np.prod(e["shape"], dtype=np.int64)),
                          offset=e["offset"])
        arrays[e["name"]] = a.reshape(e["shape"]).astype(np.float32)

    def build(prefix):
        layers = [nn.LayerSpec.from_dict(d) for d in manifest["layers"][prefix]]
        if layers != expected[prefix]:
            raise CheckpointError(f"{path}: {prefix} layer list does not match model config")
        shapes = nn.param_shapes(layers)
        tensors = {}
        for name, shape in shapes.items():
            key = f"{prefix}/param/{name}"
            if key not in arrays:
                raise CheckpointError(f"{path}: missing array {key}")
            if tuple(arrays[key].shape) != shape:
                raise CheckpointError(f"{path}: {key} has shape {arrays[key].shape}, expected {shape}")
            tensors[name] = arrays[key]
        params = nn.ModelParams(tensors)
        for name in shapes:
            params.m[name] = arrays[f"{prefix}/adam_m/{name}"].copy()
            params.v[name] = arrays[f"{prefix}/adam_v/{name}"].copy()
        params.step = int(manifest["steps"][prefix])
        return params

    ens = Ensemble(cfg, build("ma"), build("ms"))
    return Checkpoint(ens, manifest.get("config", {}), manifest.get("rng_state"),
                      int(manifest.get("iteration", 0)), manifest.get("extra", {}))
