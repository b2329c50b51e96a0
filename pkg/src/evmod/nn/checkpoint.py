"""Checkpoint serialization.

Layout (all integers little-endian):

    magic  b"RENW"
    per state entry, in module registration order:
        u32  name length
        ...  name bytes (utf-8)
        u32  dim count
        u32  each dim
        f32  raw little-endian values, row-major

State entries are trainable parameters plus batchnorm running statistics.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, CheckpointMismatch, TruncatedFile
from .modules import Module

MAGIC = b"RENW"


def save_checkpoint(module: Module, path: str | Path) -> None:
    path = Path(path)
    chunks = [MAGIC]
    for name, arr in module.named_state():
        raw = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", raw.ndim))
        chunks.append(struct.pack(f"<{raw.ndim}I", *raw.shape))
        chunks.append(raw.tobytes())
    path.write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a checkpoint into an ordered name -> float32 array mapping."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: expected {MAGIC!r}, found {blob[:4]!r}")
    pos = 4
    state: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedFile(f"{path}: needed {n} bytes at offset {pos}")
        piece = blob[pos : pos + n]
        pos += n
        return piece

    while pos < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        count = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        state[name] = data.copy()
    return state


def load_checkpoint(module: Module, path: str | Path) -> None:
    state = read_checkpoint(path)
    expected = [name for name, _ in module.named_state()]
    found = list(state.keys())
    if expected != found:
        raise CheckpointMismatch(
            f"{path}: state names do not match the model "
            f"(expected {len(expected)} entries, found {len(found)})"
        )
    try:
        module.load_state(state)
    except ValueError as exc:
        raise CheckpointMismatch(f"{path}: {exc}") from exc
