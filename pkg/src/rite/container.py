"""Binary vector container: id records plus a float32 matrix, checksummed.

Layout (all integers little-endian):

    8 bytes   magic "RITEVEC1"
    u32       version (1)
    u32       dim
    u64       count
    u32       role tag (0 = index, 1 = weights)
    count *   (u32 id byte-length, id UTF-8 bytes)
    count*dim float32, row-major
    u64       checksum of all preceding bytes

The checksum is the first 8 bytes of the SHA-256 digest of everything
before it, read as a little-endian u64 (see README).
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ChecksumError, FormatError

MAGIC = b"RITEVEC1"
VERSION = 1
ROLE_INDEX = 0
ROLE_WEIGHTS = 1


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def write_matrix(path, ids: list[str], matrix: np.ndarray, role: int) -> None:
    """Serialize an id-addressed float32 matrix to ``path``."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise FormatError("matrix must be two-dimensional")
    count, dim = matrix.shape
    if count != len(ids):
        raise FormatError(f"{len(ids)} ids for {count} rows")
    if role not in (ROLE_INDEX, ROLE_WEIGHTS):
        raise FormatError(f"unknown role tag {role}")

    chunks = [MAGIC, struct.pack("<IIQI", VERSION, dim, count, role)]
    for doc_id in ids:
        raw = doc_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    chunks.append(matrix.tobytes(order="C"))
    payload = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<Q", _checksum(payload)))


def read_matrix(path) -> tuple[list[str], np.ndarray, int]:
    """Read a container back; returns (ids, float32 matrix, role tag)."""
    with open(path, "rb") as fh:
        blob = fh.read()

    if len(blob) < len(MAGIC) + 20 + 8:
        raise FormatError("file too short for container header")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic bytes")
    version, dim, count, role = struct.unpack_from("<IIQI", blob, len(MAGIC))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if role not in (ROLE_INDEX, ROLE_WEIGHTS):
        raise FormatError(f"unknown role tag {role}")

    pos = len(MAGIC) + 20
    body_end = len(blob) - 8
    # Each row needs at least a 4-byte id header plus its float payload.
    if count * (4 + dim * 4) > body_end - pos:
        raise FormatError("declared count exceeds file size")
    ids: list[str] = []
    for _ in range(count):
        if pos + 4 > body_end:
            raise FormatError("truncated id records")
        (id_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + id_len > body_end:
            raise FormatError("truncated id records")
        try:
            ids.append(blob[pos:pos + id_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"id record is not valid UTF-8: {exc}") from exc
        pos += id_len

    matrix_bytes = count * dim * 4
    if body_end - pos != matrix_bytes:
        raise FormatError(
            f"payload length {body_end - pos} does not match "
            f"count {count} x dim {dim}"
        )
    matrix = np.frombuffer(blob[pos:body_end], dtype="<f4").reshape(count, dim).copy()

    (stored,) = struct.unpack_from("<Q", blob, body_end)
    if stored != _checksum(blob[:body_end]):
        raise ChecksumError("container checksum mismatch")
    return ids, matrix, role
