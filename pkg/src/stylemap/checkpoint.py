"""Named-tensor checkpoint container.

Layout (all integers little endian)::

    bytes 0..7    magic "SMCKPT01"
    bytes 8..15   uint64 header length in bytes
    header        UTF-8 JSON: {"meta": {...},
                               "tensors": {name: {"dtype", "shape", "offset", "nbytes"}}}
    data          raw tensor bytes, concatenated in sorted-name order

Tensor data is stored little endian; supported dtypes are float32
("<f4"), float64 ("<f8"), int64 ("<i8") and uint8 ("|u1"). Offsets are
relative to the start of the data section. The header JSON is emitted
with sorted keys and fixed separators, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"SMCKPT01"
_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


def _dtype_code(arr: np.ndarray) -> str:
    code = arr.dtype.str
    if code == "|i1":
        code = "<i8"
    if code not in _DTYPES:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    return code


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict) -> None:
    index = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        code = _dtype_code(arr)
        arr = arr.astype(code, copy=False)
        raw = arr.tobytes()
        index[name] = {
            "dtype": code,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        }
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": index}, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    hlen = int.from_bytes(blob[8:16], "little")
    header = json.loads(blob[16 : 16 + hlen].decode())
    data = blob[16 + hlen :]
    tensors = {}
    for name, rec in header["tensors"].items():
        lo, hi = rec["offset"], rec["offset"] + rec["nbytes"]
        if hi > len(data):
            raise ValueError(f"{path} is truncated at tensor {name!r}")
        arr = np.frombuffer(data[lo:hi], dtype=rec["dtype"]).reshape(rec["shape"])
        tensors[name] = arr.copy()
    return tensors, header["meta"]


def load_meta(path: str) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:8] != MAGIC:
            raise ValueError(f"{path} is not a checkpoint (bad magic)")
        hlen = int.from_bytes(head[8:16], "little")
        header = json.loads(fh.read(hlen).decode())
    return header["meta"]
