"""Binary parameter checkpoints.

Layout (all integers little-endian u32):

    magic "FKAO" | version | parameter count
    per parameter: name length | UTF-8 name | rank | dims... | fp32 payload

Payloads are raw little-endian float32 in row-major order, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError

MAGIC = b"FKAO"
VERSION = 1


def save_checkpoint(path, params: Mapping[str, "Tensor | np.ndarray"]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, value in params.items():
            arr = value.data if isinstance(value, Tensor) else np.asarray(value)
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(dims)
        offset += 4 * n
        params[name] = arr.copy()
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after parameter table")
    return params


def apply_state(named_params: Mapping[str, Tensor], state: Mapping[str, np.ndarray]):
    """Load a checkpoint dict into live parameters; names/shapes must match."""
    missing = set(named_params) - set(state)
    extra = set(state) - set(named_params)
    if missing or extra:
        raise CheckpointError(
            f"checkpoint/config mismatch: missing={sorted(missing)[:4]} extra={sorted(extra)[:4]}"
        )
    for name, tensor in named_params.items():
        arr = state[name]
        if tuple(arr.shape) != tuple(tensor.data.shape):
            raise CheckpointError(
                f"checkpoint/config mismatch for {name}: {arr.shape} vs {tensor.data.shape}"
            )
        tensor.data = np.ascontiguousarray(arr, dtype=tensor.data.dtype)
