"""Checkpoint container.

Layout: magic ``MGLC``, u32 version, u32 tensor count; per tensor a u16 name
length, the UTF-8 name, u8 rank, u32 dims, then the little-endian f32 payload;
a trailing CRC32 of everything before it.  Model parameters, the optimizer
velocities, the iteration counter and the model-shape config fields all travel
as tensors, so one file rebuilds the model and resumes training bit-exactly.
"""

from __future__ import annotations

import dataclasses
import struct
import zlib

import numpy as np

from .config import RunConfig, VARIANTS
from .errors import CheckpointError, DimensionError
from .model import MglModel

MAGIC = b"MGLC"
VERSION = 1

_CFG_FIELDS = ("K", "z", "k_nn", "t", "C")


def _config_entries(model: MglModel) -> dict[str, np.ndarray]:
    out = {name: np.asarray(float(getattr(model, name.split(".")[1])), dtype="<f4")
           for name in (f"cfg.{f}" for f in _CFG_FIELDS)}
    out["cfg.variant"] = np.asarray(float(VARIANTS.index(model.variant)), dtype="<f4")
    out["cfg.stage_weights"] = np.asarray(float(model.stage_weights), dtype="<f4")
    return out


def write_entries(path: str, entries: dict[str, np.ndarray]) -> None:
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", VERSION)
    body += struct.pack("<I", len(entries))
    for name, arr in entries.items():
        encoded = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        body += struct.pack("<H", len(encoded))
        body += encoded
        body += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            body += struct.pack("<I", dim)
        body += arr.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def read_entries(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise CheckpointError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if len(blob) < 16:
        raise CheckpointError(f"{path}: truncated before CRC")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch")
    count = struct.unpack_from("<I", blob, 8)[0]
    offset = 12
    end = len(blob) - 4
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            if len(blob[offset:offset + name_len]) != name_len:
                raise CheckpointError(f"{path}: truncated name")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset) if rank else ()
            offset += 4 * rank
            n_bytes = 4 * int(np.prod(dims)) if rank else 4
            payload = blob[offset:offset + n_bytes]
            if len(payload) != n_bytes or offset + n_bytes > end:
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            offset += n_bytes
            entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated tensor table") from exc
    if offset != end:
        raise CheckpointError(f"{path}: {end - offset} unparsed bytes before CRC")
    return entries


def save_checkpoint(path: str, model: MglModel, velocities: dict | None = None,
                    iteration: int = 0) -> None:
    entries = _config_entries(model)
    entries["opt.iter"] = np.asarray(float(iteration), dtype="<f4")
    for name, p in model.named_parameters().items():
        entries[f"param.{name}"] = p.data.astype("<f4")
    if velocities:
        for name, v in velocities.items():
            entries[f"opt.v.{name}"] = np.asarray(v, dtype="<f4")
    write_entries(path, entries)


def load_checkpoint(path: str, base: RunConfig | None = None):
    """Rebuild (model, velocities, iteration) from a checkpoint file."""
    entries = read_entries(path)
    cfg = dataclasses.replace(base) if base else RunConfig()
    for name in _CFG_FIELDS:
        key = f"cfg.{name}"
        if key not in entries:
            raise CheckpointError(f"{path}: missing config entry {key}")
        setattr(cfg, name, int(round(float(entries[key]))))
    cfg.variant = VARIANTS[int(round(float(entries["cfg.variant"])))]
    cfg.stage_weights = bool(round(float(entries["cfg.stage_weights"])))
    model = MglModel(cfg, rng=np.random.default_rng(0))
    load_params_into(model, entries, source=path)
    velocities = {}
    for key, arr in entries.items():
        if key.startswith("opt.v."):
            velocities[key[len("opt.v."):]] = arr.astype(np.float32)
    iteration = int(round(float(entries.get("opt.iter", np.float32(0.0)))))
    return model, velocities, iteration


def load_params_into(model: MglModel, entries: dict[str, np.ndarray],
                     source: str = "checkpoint") -> None:
    """Copy stored parameters into an existing model, strict on shapes."""
    for name, p in model.named_parameters().items():
        key = f"param.{name}"
        if key not in entries:
            raise CheckpointError(f"{source}: missing tensor {name!r}")
        stored = entries[key]
        if stored.shape != p.data.shape:
            raise DimensionError(f"{source}: tensor {name!r} has shape {stored.shape}, "
                                 f"model expects {p.data.shape}")
        p.data[...] = stored.astype(p.data.dtype)


def load_into(model: MglModel, path: str) -> None:
    load_params_into(model, read_entries(path), source=path)
