"""Versioned binary container used by graph, index, and checkpoint files.

Byte layout (all integers little-endian):

    offset 0   magic      8 bytes   b"LACDC001"
    offset 8   header_len u32
    offset 12  header     UTF-8 JSON: {"kind": str, "version": int, "meta": {...}}
    ...        payload_len u64
    ...        payload    raw bytes (kind-specific)
    ...        checksum   32 bytes, SHA-256 over everything between magic and checksum

Payload encodings by kind:

    "camgraph"   UTF-8 JSON document (nodes, edges); floats never appear.
    "vecindex"   row-major float64 array, ids and dim in meta.
    "checkpoint" concatenated row-major float64 tensors, shapes in meta.

JSON carries text and integers; numeric tensors are stored as raw float64 so
round-trips are bit-exact on any IEEE-754 platform.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

MAGIC = b"LACDC001"


class PersistError(Exception):
    """Raised for unreadable, mismatched, or corrupted container files."""


def write_container(path: str | Path, kind: str, version: int, meta: dict, payload: bytes) -> None:
    header = json.dumps({"kind": kind, "version": version, "meta": meta}, ensure_ascii=False).encode("utf-8")
    body = struct.pack("<I", len(header)) + header + struct.pack("<Q", len(payload)) + payload
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(MAGIC + body + digest)


def read_container(path: str | Path, kind: str, version: int) -> tuple[dict, bytes]:
    """Read and verify a container; returns (meta, payload)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise PersistError(f"cannot read {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 + 8 + 32 or raw[: len(MAGIC)] != MAGIC:
        raise PersistError(f"{path}: not a LACD container")
    body, digest = raw[len(MAGIC) : -32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise PersistError(f"{path}: checksum mismatch (truncated or corrupted file)")
    (header_len,) = struct.unpack_from("<I", body, 0)
    header = json.loads(body[4 : 4 + header_len].decode("utf-8"))
    (payload_len,) = struct.unpack_from("<Q", body, 4 + header_len)
    payload = body[4 + header_len + 8 : 4 + header_len + 8 + payload_len]
    if len(payload) != payload_len:
        raise PersistError(f"{path}: payload length mismatch")
    if header.get("kind") != kind:
        raise PersistError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    if header.get("version") != version:
        raise PersistError(f"{path}: version mismatch (file {header.get('version')}, reader {version})")
    return header.get("meta", {}), payload
