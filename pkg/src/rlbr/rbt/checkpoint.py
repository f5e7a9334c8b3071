"""Versioned binary checkpoints: magic, length-prefixed JSON header, flat float64 parameters."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RBTConfig
from .model import RewardBagTransformer

MAGIC = b"RLBR-RBT\x01"


class CheckpointError(ValueError):
    pass


def save(model: RewardBagTransformer, path) -> None:
    header = json.dumps({
        "config": model.config.to_dict(),
        "state_dim": model.state_dim,
        "action_dim": model.action_dim,
        "n_params": model.n_parameters(),
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(model.flat().astype("<f8").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not an RBT checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(n))


def load(path, expect_config: RBTConfig | None = None, expect_dims: tuple | None = None) -> RewardBagTransformer:
    """Rebuild a model; the echoed config (and dims) must match the expectation when given."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not an RBT checkpoint")
    (n,) = struct.unpack("<Q", raw[len(MAGIC):len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(raw[start:start + n])
    cfg = RBTConfig(**header["config"])
    if expect_config is not None and cfg != expect_config:
        raise CheckpointError("checkpoint config does not match the expected config")
    dims = (header["state_dim"], header["action_dim"])
    if expect_dims is not None and tuple(expect_dims) != dims:
        raise CheckpointError(f"checkpoint dims {dims} != expected {tuple(expect_dims)}")
    vec = np.frombuffer(raw[start + n:], dtype="<f8")
    if vec.size != header["n_params"]:
        raise CheckpointError("parameter count does not match header")
    model = RewardBagTransformer(*dims, cfg)
    model.load_flat(vec.astype(np.float64))
    return model
