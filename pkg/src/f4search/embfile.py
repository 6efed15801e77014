"""Reader/writer for the F4E binary embedding batch format.

Layout, all integers little-endian, no padding:

    magic "F4EM" | version u16 = 1 | dim u32 | count u64
    per record: id_len u16 | id UTF-8 bytes | dim * f32

Vectors are stored in 32-bit floats and re-normalized (in double
precision) on load, so every loaded vector carries the unit-norm flag.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateIdError,
    MixedDimsError,
    TruncatedFileError,
    VersionUnsupportedError,
)
from .vectors import EmbeddingVector, l2_normalize

F4E_MAGIC = b"F4EM"
F4E_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_ID_LEN = struct.Struct("<H")

Record = tuple[str, EmbeddingVector]


def write_embedding_file(records: Sequence[Record], path) -> None:
    """Write (id, vector) records to ``path`` in F4E format.

    All vectors must share one dimension and ids must be unique. An empty
    record list produces a valid file with count 0 and dim 0.
    """
    dims = {vec.dim for _, vec in records}
    if len(dims) > 1:
        raise MixedDimsError(f"records mix dims {sorted(dims)}")
    seen = set()
    for rid, _ in records:
        if rid in seen:
            raise DuplicateIdError(f"duplicate record id {rid!r}")
        seen.add(rid)

    dim = dims.pop() if dims else 0
    parts = [_HEADER.pack(F4E_MAGIC, F4E_VERSION, dim, len(records))]
    for rid, vec in records:
        id_bytes = rid.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"record id too long: {rid!r}")
        parts.append(_ID_LEN.pack(len(id_bytes)))
        parts.append(id_bytes)
        parts.append(vec.values.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_embedding_file(path) -> list[Record]:
    """Load all records from an F4E file, in file order.

    Every vector is L2-normalized on load. Raises BadMagicError,
    VersionUnsupportedError, TruncatedFileError or DuplicateIdError on
    malformed input.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the F4E header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != F4E_MAGIC:
        raise BadMagicError(f"{path}: expected magic {F4E_MAGIC!r}, got {magic!r}")
    if version != F4E_VERSION:
        raise VersionUnsupportedError(f"{path}: F4E version {version}")

    offset = _HEADER.size
    records: list[Record] = []
    seen: set[str] = set()
    vec_bytes = 4 * dim
    for _ in range(count):
        if offset + _ID_LEN.size > len(data):
            raise TruncatedFileError(f"{path}: record header past end of file")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(data):
            raise TruncatedFileError(f"{path}: record body past end of file")
        rid = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        raw = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        if rid in seen:
            raise DuplicateIdError(f"{path}: duplicate record id {rid!r}")
        seen.add(rid)
        records.append((rid, l2_normalize(EmbeddingVector(raw))))
    if offset != len(data):
        raise TruncatedFileError(
            f"{path}: {len(data) - offset} trailing bytes beyond header-implied length"
        )
    return records
