"""Length-prefixed field framing shared by the ledger and protocol encodings.

A frame is a concatenation of ``u32_be(len(field)) || field`` for each field.
"""
from __future__ import annotations

import struct
from typing import Sequence


class FrameError(ValueError):
    pass


def encode_fields(fields: Sequence[bytes]) -> bytes:
    out = bytearray()
    for f in fields:
        out += struct.pack(">I", len(f))
        out += f
    return bytes(out)


def decode_fields(data: bytes, count: int | None = None) -> list[bytes]:
    """Split a frame into its fields; the frame must be consumed exactly."""
    fields = []
    off = 0
    n = len(data)
    while off < n:
        if off + 4 > n:
            raise FrameError("truncated length prefix")
        (length,) = struct.unpack_from(">I", data, off)
        off += 4
        if off + length > n:
            raise FrameError("field overruns frame")
        fields.append(bytes(data[off:off + length]))
        off += length
    if count is not None and len(fields) != count:
        raise FrameError(f"expected {count} fields, found {len(fields)}")
    return fields


def u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


def read_u64(b: bytes) -> int:
    if len(b) != 8:
        raise FrameError("expected an 8-byte integer")
    return int.from_bytes(b, "big")
