"""Single-file checkpoints: JSON config header followed by a torch blob.

Byte layout::

    b"EEGRCKPT"  uint32 LE format version  uint64 LE header length
    header (UTF-8 JSON)  weight blob (torch.save of a dict)
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import torch

from .errors import MissingPrerequisite, ValidationError

MAGIC = b"EEGRCKPT"
VERSION = 1


def save(path: str | Path, header: dict, state: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    torch.save(state, buf)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(head)))
        f.write(head)
        f.write(buf.getvalue())


def read_header(path: str | Path) -> dict:
    return load(path, weights=False)[0]


def load(path: str | Path, weights: bool = True) -> tuple[dict, dict | None]:
    path = Path(path)
    if not path.is_file():
        raise MissingPrerequisite(path, "checkpoint")
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValidationError(f"{path} is not a checkpoint file")
        version, n = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(n).decode())
        if not weights:
            return header, None
        state = torch.load(io.BytesIO(f.read()), map_location="cpu", weights_only=False)
    return header, state
