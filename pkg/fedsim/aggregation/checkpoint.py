"""
Checkpoint file format.

    FEDSIM-CKPT 1
    groups <n>
    <name>\t<count>        (one line per group, in order)
    <payload>              little-endian float64, groups concatenated in header order
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fedsim.aggregation.param_store import ModelParams
from fedsim.errors import CheckpointError

MAGIC = "FEDSIM-CKPT"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f8")


def encode_checkpoint(params: ModelParams) -> bytes:
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"groups {len(params)}"]
    for name, count in params.layout:
        if any(c in name for c in "\t\n\r"):
            raise CheckpointError(f"group name {name!r} cannot be stored (contains tab or newline)")
        lines.append(f"{name}\t{count}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    return header + params.flat().astype(_PAYLOAD_DTYPE, copy=False).tobytes()


def decode_checkpoint(blob: bytes) -> ModelParams:
    pos = 0

    def next_line() -> str:
        nonlocal pos
        end = blob.find(b"\n", pos)
        if end < 0:
            raise CheckpointError("truncated header")
        try:
            line = blob[pos:end].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"header is not UTF-8 text: {exc}") from exc
        pos = end + 1
        return line

    magic = next_line().split(" ")
    if len(magic) != 2 or magic[0] != MAGIC:
        raise CheckpointError("not a fedsim checkpoint")
    if magic[1] != str(FORMAT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {magic[1]}")
    try:
        tag, n_groups = next_line().split(" ")
        if tag != "groups":
            raise ValueError(tag)
        layout = []
        for _ in range(int(n_groups)):
            name, count = next_line().split("\t")
            layout.append((name, int(count)))
    except ValueError as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc

    total = sum(count for _, count in layout)
    payload = blob[pos:]
    if len(payload) != total * _PAYLOAD_DTYPE.itemsize:
        raise CheckpointError(f"payload has {len(payload)} bytes, header declares {total} float64 values")
    flat = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).astype(np.float64)

    groups, offset = [], 0
    for name, count in layout:
        groups.append((name, flat[offset:offset + count]))
        offset += count
    return ModelParams(groups)


def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(params))
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
