"""Versioned binary checkpoints.

Layout: magic "FTGC", u32 format version, u32 header length, UTF-8 JSON
header (model hyperparameters, schedule, parameter manifest, free-form
metadata), then the raw parameter buffers in manifest order, float32
little-endian. Parameters are stored in their native float32, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ftg.denoisers import ToyDenoiser
from ftg.errors import CheckpointError
from ftg.schedule import NoiseSchedule

CHECKPOINT_MAGIC = b"FTGC"
CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = ".ftgc"


def checkpoint_bytes(denoiser: ToyDenoiser, sched: NoiseSchedule,
                     meta: Optional[dict] = None) -> bytes:
    manifest = [{"name": name, "shape": list(p.shape)}
                for name, p in denoiser.params.items()]
    header = {
        "model": {"type": "toy", "width": denoiser.width,
                  "temb_dim": denoiser.temb_dim},
        "schedule": {"beta": [float(b) for b in sched.beta],
                     "eta": sched.eta, "sigma_mode": sched.sigma_mode},
        "params": manifest,
        "meta": meta or {},
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob]
    for name, p in denoiser.params.items():
        out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(out)


def save_checkpoint(path: Union[str, Path], denoiser: ToyDenoiser,
                    sched: NoiseSchedule, meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(denoiser, sched, meta))
    return path


def load_checkpoint_bytes(blob: bytes) -> tuple[ToyDenoiser, NoiseSchedule, dict]:
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc

    model = header.get("model", {})
    if model.get("type") != "toy":
        raise CheckpointError(f"unknown model type {model.get('type')!r}")
    denoiser = ToyDenoiser(width=int(model["width"]),
                           temb_dim=int(model["temb_dim"]))
    sched_info = header.get("schedule", {})
    sched = NoiseSchedule(np.asarray(sched_info["beta"], dtype=np.float64),
                          eta=float(sched_info.get("eta", 1.0)),
                          sigma_mode=sched_info.get("sigma_mode", "posterior"))

    offset = 12 + header_len
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in denoiser.params:
            raise CheckpointError(f"unknown parameter {name!r} in checkpoint")
        if denoiser.params[name].shape != shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {shape}, "
                f"model expects {denoiser.params[name].shape}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(blob):
            raise CheckpointError("checkpoint truncated inside parameter data")
        denoiser.params[name] = np.frombuffer(
            blob[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes in checkpoint")
    denoiser._check_finite()
    return denoiser, sched, header.get("meta", {})


def load_checkpoint(path: Union[str, Path]) -> tuple[ToyDenoiser, NoiseSchedule, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint file not found: {path}")
    return load_checkpoint_bytes(path.read_bytes())
