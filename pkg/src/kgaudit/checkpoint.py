"""Binary model checkpoints.

Layout (little-endian)::

    8s   magic  b"KGEAUDIT"
    u32  version
    u32  kind code (index into KINDS)
    u32  norm code (0 none, 1 L1, 2 L2)
    u32  m (entity dim), u32 n (relation dim)
    u32  entity count, u32 relation count
    f32  entity table   (count x stored width)
    f32  relation table (count x stored width)
    f32  TransH normals (relation count x n), TransH only
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import KINDS, Model

MAGIC = b"KGEAUDIT"
VERSION = 1
_HEADER = struct.Struct("<8s7I")
_NORMS = (None, "L1", "L2")


class CheckpointError(ValueError):
    pass


def save_model(model: Model, path) -> Path:
    """Write ``model``; tables are stored as float32."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, KINDS.index(model.kind), _NORMS.index(model.norm),
                          model.m, model.n, model.n_entities, model.n_relations)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in model.params().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return path


def load_model(path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, kind, norm, m, n, n_ent, n_rel = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if kind >= len(KINDS) or norm >= len(_NORMS):
        raise CheckpointError(f"{path}: corrupt header")
    kind = KINDS[kind]
    width = 2 * m if kind in ("ComplEx", "RotatE") else m
    shapes = [(n_ent, width), (n_rel, width)] + ([(n_rel, n)] if kind == "TransH" else [])
    expected = _HEADER.size + 4 * sum(a * b for a, b in shapes)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(raw)}")
    tables, pos = [], _HEADER.size
    for rows, cols in shapes:
        tables.append(np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=pos)
                      .reshape(rows, cols).astype(np.float32))
        pos += 4 * rows * cols
    normal = tables[2] if kind == "TransH" else None
    return Model(kind, m, tables[0], tables[1], normal, _NORMS[norm])
