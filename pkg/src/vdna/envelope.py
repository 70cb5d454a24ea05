"""Common binary envelope shared by all on-disk formats.

Envelope layout (all integers little-endian):

    magic     8 bytes, ASCII, identifies the format
    version   u32, currently 1 for every format
    meta_len  u32
    meta      UTF-8 JSON, meta_len bytes
    payload   format-specific bytes until EOF

The JSON metadata keeps every file self-describing and greppable while the
bulk payload stays compact. Readers reject unknown magic and versions
outright rather than guessing.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

from .errors import FormatError

VERSION = 1

_HEAD = struct.Struct("<8sII")


def write_header(fh: BinaryIO, magic: bytes, meta: dict) -> None:
    if len(magic) != 8:
        raise ValueError(f"magic must be exactly 8 bytes, got {len(magic)}")
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    fh.write(_HEAD.pack(magic, VERSION, len(blob)))
    fh.write(blob)


def read_header(fh: BinaryIO, magic: bytes) -> dict:
    """Read and validate an envelope header, leaving fh at the payload start."""
    head = fh.read(_HEAD.size)
    if len(head) < _HEAD.size:
        raise FormatError("truncated file: envelope header incomplete")
    got_magic, version, meta_len = _HEAD.unpack(head)
    if got_magic != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {got_magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} (expected {VERSION})")
    blob = fh.read(meta_len)
    if len(blob) < meta_len:
        raise FormatError("truncated file: metadata incomplete")
    try:
        meta = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(meta, dict):
        raise FormatError("metadata must be a JSON object")
    return meta


def read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) < n:
        raise FormatError(f"truncated file while reading {what}")
    return data
