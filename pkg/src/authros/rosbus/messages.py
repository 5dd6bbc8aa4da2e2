"""Typed bus messages and their fixed wire encodings."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum

ODOM_MAGIC = b"AROSODOM"
IMAGE_MAGIC = b"AROSIMG1"
_ODOM_BODY = struct.Struct("<49d2Q")  # lv3 av3 pose7 cov36, then ts seconds / nanoseconds
ODOM_SIZE = len(ODOM_MAGIC) + _ODOM_BODY.size

QUAT_TOL = 1e-6
COV_TOL = 1e-9


class ParseError(ValueError):
    pass


class MessageType(str, Enum):
    ODOMETRY = "Odometry"
    COMPRESSED_IMAGE = "CompressedImage"
    GENERIC = "Generic"


@dataclass(frozen=True)
class TopicName:
    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.startswith("/") or self.name == "/":
            raise ValueError(f"topic must be a non-empty name starting with '/': {self.name!r}")
        if "//" in self.name or any(c.isspace() for c in self.name):
            raise ValueError(f"malformed topic {self.name!r}")

    def __str__(self):
        return self.name


def identity_covariance() -> tuple[float, ...]:
    return tuple(1.0 if r == c else 0.0 for r in range(6) for c in range(6))


@dataclass(frozen=True)
class OdometryMsg:
    lv: tuple[float, float, float] = (0.0, 0.0, 0.0)
    av: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # position xyz, then orientation quaternion wxyz
    pose: tuple[float, ...] = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)
    cov: tuple[float, ...] = field(default_factory=identity_covariance)
    ts: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for name, n in (("lv", 3), ("av", 3), ("pose", 7), ("cov", 36), ("ts", 2)):
            value = tuple(getattr(self, name))
            if len(value) != n:
                raise ValueError(f"{name} needs {n} entries")
            object.__setattr__(self, name, value)
        if not all(math.isfinite(v) for v in self.lv + self.av + self.pose + self.cov):
            raise ValueError("odometry values must be finite")
        qnorm = math.sqrt(sum(q * q for q in self.pose[3:]))
        if abs(qnorm - 1.0) > QUAT_TOL:
            raise ValueError(f"orientation quaternion norm {qnorm} is not 1")
        for r in range(6):
            for c in range(r + 1, 6):
                if abs(self.cov[6 * r + c] - self.cov[6 * c + r]) > COV_TOL:
                    raise ValueError("covariance is not symmetric")
        sec, nsec = self.ts
        if sec < 0 or not 0 <= nsec < 1_000_000_000:
            raise ValueError("timestamp out of range")

    def encode(self) -> bytes:
        return ODOM_MAGIC + _ODOM_BODY.pack(*self.lv, *self.av, *self.pose, *self.cov, *self.ts)


def parse_odometry(raw: bytes) -> OdometryMsg:
    if len(raw) != ODOM_SIZE:
        raise ParseError(f"odometry frame must be {ODOM_SIZE} bytes, got {len(raw)}")
    if raw[:8] != ODOM_MAGIC:
        raise ParseError("bad odometry magic")
    v = _ODOM_BODY.unpack(raw[8:])
    try:
        return OdometryMsg(v[0:3], v[3:6], v[6:13], v[13:49], (v[49], v[50]))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


@dataclass(frozen=True)
class ImageMsg:
    payload: bytes
    format_tag: str = "jpeg"

    def __post_init__(self):
        if not self.payload:
            raise ValueError("image payload must be non-empty")
        tag = self.format_tag.encode()
        if not 0 < len(tag) < 256:
            raise ValueError("format tag must be 1..255 bytes")

    def encode(self) -> bytes:
        tag = self.format_tag.encode()
        return IMAGE_MAGIC + bytes([len(tag)]) + tag + self.payload


def parse_image(raw: bytes) -> ImageMsg:
    if raw[:8] != IMAGE_MAGIC or len(raw) < 10:
        raise ParseError("bad image frame")
    n = raw[8]
    tag, payload = raw[9:9 + n], raw[9 + n:]
    try:
        return ImageMsg(payload, tag.decode())
    except (UnicodeDecodeError, ValueError) as exc:
        raise ParseError(f"bad image frame: {exc}") from None


Message = OdometryMsg | ImageMsg | bytes


def message_type_of(msg: Message) -> MessageType:
    if isinstance(msg, OdometryMsg):
        return MessageType.ODOMETRY
    if isinstance(msg, ImageMsg):
        return MessageType.COMPRESSED_IMAGE
    return MessageType.GENERIC


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, (OdometryMsg, ImageMsg)):
        return msg.encode()
    return bytes(msg)


def parse_message(raw: bytes, kind: MessageType) -> Message:
    kind = MessageType(kind)
    if kind is MessageType.ODOMETRY:
        return parse_odometry(raw)
    if kind is MessageType.COMPRESSED_IMAGE:
        return parse_image(raw)
    return bytes(raw)
