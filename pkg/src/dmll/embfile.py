"""Binary embedding files.

Layout: magic ``DMLLEMB1``, then a little-endian uint32 entry count and
a uint32 dimension, then for each entry a uint32 byte length, that many
UTF-8 key bytes, and ``dim`` little-endian float32 values.  The same
layout stores prompt embeddings (keyed by prompt text) and dataset
feature sidecars (keyed by instance id).
"""

import struct

import numpy as np

from .errors import DataFormatError
from .fileio import atomic_write_bytes

MAGIC = b"DMLLEMB1"


def write_embeddings(path: str, entries: dict[str, np.ndarray]) -> None:
    """Write a key -> vector mapping; values are stored as float32."""
    if not entries:
        raise DataFormatError("refusing to write an embedding file with no entries")
    dims = {np.asarray(v).shape for v in entries.values()}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DataFormatError(f"entries must share one 1-d shape, got {sorted(dims)}")
    dim = next(iter(dims))[0]
    parts = [MAGIC, struct.pack("<II", len(entries), dim)]
    for key, vec in entries.items():
        raw = key.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(np.asarray(vec, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_embeddings(path: str) -> dict[str, np.ndarray]:
    """Read a mapping written by write_embeddings; values come back float64."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read embedding file: {exc}") from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: bad magic, not an embedding file")
    off = len(MAGIC)
    try:
        count, dim = struct.unpack_from("<II", blob, off)
        off += 8
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", blob, off)
            off += 4
            key = blob[off : off + klen].decode("utf-8")
            if len(blob) < off + klen + 4 * dim:
                raise struct.error("short read")
            off += klen
            vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
            if key in out:
                raise DataFormatError(f"{path}: duplicate key {key!r}")
            out[key] = vec.astype(np.float64)
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataFormatError(f"{path}: truncated or corrupt embedding file: {exc}") from exc
    if off != len(blob):
        raise DataFormatError(f"{path}: {len(blob) - off} trailing bytes after {count} entries")
    return out
