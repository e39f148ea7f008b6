"""Flat named-tensor container.

Layout (all text lines UTF-8, ``\\n`` terminated)::

    TOKTIME-CKPT 1
    meta <nbytes>
    <json>
    tensor <name> <dtype> <d0,d1,...> <nbytes>
    <raw little-endian bytes>
    ...
    end

Tensors are stored in insertion order; writing the same content twice
produces identical bytes.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

MAGIC = "TOKTIME-CKPT 1"
_DTYPES = {"f8": "<f8", "f4": "<f4", "i8": "<i8", "i4": "<i4", "u1": "|u1", "b1": "|b1"}


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(f"{MAGIC}\nmeta {len(meta_bytes)}\n".encode())
    buf.write(meta_bytes + b"\n")
    for name, arr in tensors.items():
        if any(c.isspace() for c in name):
            raise CheckpointError(f"tensor name {name!r} contains whitespace")
        arr = np.asarray(arr)
        code = arr.dtype.kind + str(arr.dtype.itemsize)
        if code not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        shape = ",".join(str(s) for s in arr.shape)
        buf.write(f"tensor {name} {code} {shape} {len(data)}\n".encode())
        buf.write(data + b"\n")
    buf.write(b"end\n")
    return buf.getvalue()


def loads(raw: bytes) -> tuple[dict[str, np.ndarray], dict]:
    pos = 0

    def line() -> str:
        nonlocal pos
        end = raw.find(b"\n", pos)
        if end < 0:
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        text = raw[pos:end].decode("utf-8")
        pos = end + 1
        return text

    def block(n: int) -> bytes:
        nonlocal pos
        if pos + n + 1 > len(raw) or raw[pos + n: pos + n + 1] != b"\n":
            raise CheckpointError(f"truncated payload at byte {pos}")
        data = raw[pos: pos + n]
        pos += n + 1
        return data

    if line() != MAGIC:
        raise CheckpointError("not a checkpoint file")
    head = line().split()
    if len(head) != 2 or head[0] != "meta":
        raise CheckpointError("missing meta header")
    meta = json.loads(block(int(head[1])).decode("utf-8"))
    tensors: dict[str, np.ndarray] = {}
    while True:
        header = line()
        if header == "end":
            break
        parts = header.split(" ")
        if len(parts) != 5 or parts[0] != "tensor":
            raise CheckpointError(f"bad tensor header {header!r}")
        _, name, code, shape_txt, nbytes = parts
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code!r}")
        shape = tuple(int(s) for s in shape_txt.split(",")) if shape_txt else ()
        data = block(int(nbytes))
        arr = np.frombuffer(data, dtype=_DTYPES[code])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"{name}: {arr.size} values do not fill shape {shape}")
        tensors[name] = arr.reshape(shape).copy()
    return tensors, meta


def save(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
