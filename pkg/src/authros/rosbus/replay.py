"""Replay files: one ``<hex topic> <hex type> <hex payload>`` triple per line."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .bus import Master, Role
from .messages import MessageType, TopicName


class ReplayFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ReplayRecord:
    topic: str
    msg_type: MessageType
    payload: bytes

    def to_line(self) -> str:
        return " ".join([self.topic.encode().hex(), self.msg_type.value.encode().hex(), self.payload.hex()])


def parse_replay_line(line: str) -> ReplayRecord:
    parts = line.split()
    if len(parts) != 3:
        raise ReplayFormatError("expected three hex fields")
    try:
        topic = bytes.fromhex(parts[0]).decode()
        kind = MessageType(bytes.fromhex(parts[1]).decode())
        payload = bytes.fromhex(parts[2])
        TopicName(topic)
    except ValueError as exc:
        raise ReplayFormatError(str(exc)) from None
    return ReplayRecord(topic, kind, payload)


def read_replay(path: str | Path) -> list[ReplayRecord]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            out.append(parse_replay_line(line))
        except ReplayFormatError as exc:
            raise ReplayFormatError(f"line {n}: {exc}") from None
    return out


def write_replay(path: str | Path, records: Iterable[ReplayRecord]) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in records))


def inject(master: Master, records: Iterable[ReplayRecord], prefix: str = "replay") -> int:
    """Publish records in file order, one publisher node per topic."""
    pubs = {}
    delivered = 0
    for r in records:
        if r.topic not in pubs:
            pubs[r.topic] = master.register(f"{prefix}{r.topic}", r.topic, Role.PUBLISHER)
        delivered += master.publish(pubs[r.topic], r.payload, r.msg_type)
    for h in pubs.values():
        h.close()
    return delivered
