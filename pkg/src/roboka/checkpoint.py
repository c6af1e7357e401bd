"""Bit-exact model checkpoints.

Layout: magic "RBKA" | version u16 LE | header length u32 LE | header JSON
(utf-8, sorted keys) | one raw little-endian float64 block per parameter in
declared order | CRC32 u32 LE over everything before it.

The header records the architecture tag, embedding dims, grid config, and
each parameter's name and shape, so a load rebuilds an identical model.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelParams, build_model

MAGIC = b"RBKA"
VERSION = 1


def save_checkpoint(p: ModelParams, path) -> None:
    params = p.parameters()
    header = {
        "arch_tag": p.arch_tag,
        "d_s": p.d_s,
        "d_t": p.d_t,
        "grid": {"lo": p.grid.lo, "hi": p.grid.hi, "intervals": p.grid.intervals},
        "kan_base": p.kan_base,
        "classifier": p.classifier,
        "params": [[name, list(arr.shape)] for name, arr in params.items()],
    }
    head_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += struct.pack("<I", len(head_bytes))
    blob += head_bytes
    for arr in params.values():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    (head_len,) = struct.unpack_from("<I", raw, 6)
    try:
        header = json.loads(raw[10 : 10 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc

    p = build_model(
        header["arch_tag"],
        header["d_s"],
        header["d_t"],
        grid_lo=header["grid"]["lo"],
        grid_hi=header["grid"]["hi"],
        grid_intervals=header["grid"]["intervals"],
        seed=0,
        kan_base=header["kan_base"],
        classifier=header["classifier"],
    )
    params = p.parameters()
    declared = [(name, tuple(shape)) for name, shape in header["params"]]
    if [(n, tuple(a.shape)) for n, a in params.items()] != declared:
        raise CheckpointError(f"{path}: header parameter list does not match {header['arch_tag']}")

    offset = 10 + head_len
    for name, shape in declared:
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw) - 4:
            raise CheckpointError(f"{path}: truncated parameter block {name}")
        block = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape)
        params[name][...] = block
        offset = end
    if offset != len(raw) - 4:
        raise CheckpointError(f"{path}: trailing bytes after parameter blocks")
    return p
