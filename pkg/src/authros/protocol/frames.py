"""Byte-exact client/server frames: plaintext record, ND2/ND3 and key allocation.

Every frame is a sequence of length-prefixed fields (u32 big-endian length,
then the bytes) in a fixed order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from ..crypto import CurvePoint, Sm2Signature
from ..rosbus.messages import ImageMsg, MessageType, OdometryMsg, parse_image
from ..wire import FrameError, decode_fields, encode_fields, read_u64, u64

SM4_KEY_SIZE = 16
POINT_SIZE = 65
KEYALLOC_PLAINTEXT_SIZE = SM4_KEY_SIZE + POINT_SIZE


class Command(IntEnum):
    UPLOAD = 0x01
    GRANT = 0x02
    QUERY = 0x03
    KEYALLOC = 0x04


def _command(raw: bytes) -> Command:
    if len(raw) != 1:
        raise FrameError("command must be one byte")
    try:
        return Command(raw[0])
    except ValueError:
        raise FrameError(f"unknown command 0x{raw[0]:02x}") from None


def timestamp_bytes(ms: int) -> bytes:
    """Decimal UTC milliseconds as ASCII."""
    return str(int(ms)).encode()


def parse_timestamp(raw: bytes) -> int:
    if not raw.isdigit():
        raise FrameError("timestamp must be decimal ASCII")
    return int(raw)


def _floats(values) -> bytes:
    return struct.pack(f"<{len(values)}d", *values)


def _unfloats(raw: bytes, n: int) -> tuple[float, ...]:
    if len(raw) != 8 * n:
        raise FrameError(f"expected {n} doubles")
    return struct.unpack(f"<{n}d", raw)


@dataclass(frozen=True)
class PlainRecord:
    """ND1: ``{lv, av, pose, ts, cov, type}`` plus an opaque body for non-odometry data.

    Odometry keeps its numeric fields and an empty body; images and generic
    payloads leave the numeric fields empty and carry their bus encoding in
    ``body``.
    """
    msg_type: MessageType
    lv: tuple[float, ...] = ()
    av: tuple[float, ...] = ()
    pose: tuple[float, ...] = ()
    ts: tuple[int, ...] = ()
    cov: tuple[float, ...] = ()
    body: bytes = b""

    @classmethod
    def from_message(cls, msg) -> "PlainRecord":
        if isinstance(msg, OdometryMsg):
            return cls(MessageType.ODOMETRY, msg.lv, msg.av, msg.pose, msg.ts, msg.cov)
        if isinstance(msg, ImageMsg):
            return cls(MessageType.COMPRESSED_IMAGE, body=msg.encode())
        return cls(MessageType.GENERIC, body=bytes(msg))

    def message(self):
        if self.msg_type is MessageType.ODOMETRY:
            return OdometryMsg(self.lv, self.av, self.pose, self.cov, self.ts)
        if self.msg_type is MessageType.COMPRESSED_IMAGE:
            return parse_image(self.body)
        return self.body

    def encode(self) -> bytes:
        odo = self.msg_type is MessageType.ODOMETRY
        return encode_fields([
            _floats(self.lv) if odo else b"",
            _floats(self.av) if odo else b"",
            _floats(self.pose) if odo else b"",
            struct.pack("<2Q", *self.ts) if odo else b"",
            _floats(self.cov) if odo else b"",
            self.msg_type.value.encode(),
            self.body,
        ])

    @classmethod
    def decode(cls, data: bytes) -> "PlainRecord":
        lv, av, pose, ts, cov, kind, body = decode_fields(data, 7)
        try:
            msg_type = MessageType(kind.decode())
        except (UnicodeDecodeError, ValueError):
            raise FrameError("unknown record type") from None
        if msg_type is MessageType.ODOMETRY:
            if body or len(ts) != 16:
                raise FrameError("malformed odometry record")
            rec = cls(msg_type, _unfloats(lv, 3), _unfloats(av, 3), _unfloats(pose, 7),
                      struct.unpack("<2Q", ts), _unfloats(cov, 36))
            try:
                rec.message()
            except ValueError as exc:
                raise FrameError(f"odometry record fails validation: {exc}") from None
            return rec
        if lv or av or pose or ts or cov:
            raise FrameError("numeric fields only belong to odometry records")
        rec = cls(msg_type, body=body)
        if msg_type is MessageType.COMPRESSED_IMAGE:
            try:
                rec.message()
            except ValueError as exc:
                raise FrameError(str(exc)) from None
        return rec


@dataclass(frozen=True)
class InnerFrame:
    """ND2: ``{ct1, type, t, T, command, (r, s)}``."""
    ct1: bytes
    msg_type: MessageType
    token: bytes
    capture_time: int
    command: Command
    signature: Sm2Signature

    def encode(self) -> bytes:
        return encode_fields([
            self.ct1, self.msg_type.value.encode(), self.token, timestamp_bytes(self.capture_time),
            bytes([self.command]), self.signature.to_bytes(),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "InnerFrame":
        ct1, kind, token, ts, cmd, sig = decode_fields(data, 6)
        try:
            msg_type = MessageType(kind.decode())
            signature = Sm2Signature.from_bytes(sig)
        except (UnicodeDecodeError, ValueError) as exc:
            raise FrameError(str(exc)) from None
        return cls(ct1, msg_type, token, parse_timestamp(ts), _command(cmd), signature)


@dataclass(frozen=True)
class OuterFrame:
    """ND3: ``{ct2, N}``."""
    ct2: bytes
    name: str

    def encode(self) -> bytes:
        return encode_fields([self.ct2, self.name.encode()])

    @classmethod
    def decode(cls, data: bytes) -> "OuterFrame":
        ct2, name = decode_fields(data, 2)
        try:
            return cls(ct2, name.decode())
        except UnicodeDecodeError:
            raise FrameError("name is not UTF-8") from None


@dataclass(frozen=True)
class KeyAllocMessage:
    """``{CT, (r, s), P_S id, Command}``; CT encrypts ``K_C || P_C`` to the system key."""
    ct: bytes
    signature: Sm2Signature
    ps_id: int
    command: Command = Command.KEYALLOC

    def encode(self) -> bytes:
        return encode_fields([self.ct, self.signature.to_bytes(), u64(self.ps_id), bytes([self.command])])

    @classmethod
    def decode(cls, data: bytes) -> "KeyAllocMessage":
        ct, sig, ps_id, cmd = decode_fields(data, 4)
        try:
            signature = Sm2Signature.from_bytes(sig)
        except ValueError as exc:
            raise FrameError(str(exc)) from None
        return cls(ct, signature, read_u64(ps_id), _command(cmd))


def keyalloc_plaintext(sm4_key: bytes, public_key: CurvePoint) -> bytes:
    if len(sm4_key) != SM4_KEY_SIZE:
        raise ValueError("SM4 key must be 16 bytes")
    return sm4_key + public_key.to_bytes()


def split_keyalloc_plaintext(data: bytes) -> tuple[bytes, CurvePoint]:
    if len(data) != KEYALLOC_PLAINTEXT_SIZE:
        raise FrameError("key allocation payload must be 81 bytes")
    return data[:SM4_KEY_SIZE], CurvePoint.from_bytes(data[SM4_KEY_SIZE:])
