"""Binary checkpoint format.

Layout: magic "FVLM", version u32 LE, tensor count u32 LE, then per tensor:
name length u16 LE, UTF-8 name, rank u8, dims u32 LE each, float32 LE data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"FVLM"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_checkpoint(policy, path):
    tensors = [(name, t.detach().cpu().numpy().astype(np.float32, copy=False))
               for name, t in policy.state_dict().items()]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4, "dim"))[0]
                          for _ in range(rank))
            n_items = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 4 * n_items, f"tensor {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after last tensor")
    return tensors


def load_into(policy, path):
    """Load a checkpoint's tensors into a policy with a matching state dict."""
    tensors = load_checkpoint(path)
    state = policy.state_dict()
    if set(state) != set(tensors):
        missing = set(state) ^ set(tensors)
        raise CheckpointError(f"tensor name mismatch: {sorted(missing)}")
    policy.load_state_dict({name: torch.from_numpy(arr) for name, arr in tensors.items()})
    return policy
