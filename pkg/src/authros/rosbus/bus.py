"""In-process master and topic bus with a monitoring subscriber.

Delivery is queue based: ``publish`` copies the encoded message into every
subscriber's inbox under the topic lock and returns; subscribers consume on
their own thread, so the bus never runs user code while holding its locks.
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

from .messages import Message, MessageType, ParseError, TopicName, encode_message, message_type_of, parse_message


class Role(str, Enum):
    PUBLISHER = "publisher"
    SUBSCRIBER = "subscriber"


class BusError(Exception):
    pass


class DuplicateNode(BusError):
    pass


class RoleError(BusError):
    pass


def wall_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class Delivery:
    topic: str
    msg_type: MessageType
    payload: bytes
    publisher: str
    seq: int
    published_at: int


class NodeHandle:
    def __init__(self, master: "Master", node_id: str, topic: str, role: Role):
        self.master = master
        self.node_id = node_id
        self.topic = topic
        self.role = role
        self.inbox: queue.Queue[Delivery] = queue.Queue()
        self._seq = 0
        self.closed = False

    def publish(self, msg: Message) -> int:
        return self.master.publish(self, msg)

    def receive(self, timeout: float | None = None) -> Delivery | None:
        try:
            return self.inbox.get(timeout=timeout) if timeout is not None else self.inbox.get_nowait()
        except queue.Empty:
            return None

    def drain(self) -> list[Delivery]:
        out = []
        while (d := self.receive()) is not None:
            out.append(d)
        return out

    def close(self) -> None:
        self.master.unregister(self)


class Master:
    def __init__(self, clock: Callable[[], int] = wall_ms):
        self.clock = clock
        self._lock = threading.Lock()
        self._nodes: dict[str, NodeHandle] = {}
        self._subs: dict[str, list[NodeHandle]] = {}
        self._topic_locks: dict[str, threading.Lock] = {}

    def register(self, node_id: str, topic: str | TopicName, role: Role | str) -> NodeHandle:
        name = str(TopicName(str(topic)))
        role = Role(role)
        with self._lock:
            if node_id in self._nodes:
                raise DuplicateNode(f"node id {node_id!r} already registered")
            handle = NodeHandle(self, node_id, name, role)
            self._nodes[node_id] = handle
            self._topic_locks.setdefault(name, threading.Lock())
            if role is Role.SUBSCRIBER:
                self._subs.setdefault(name, []).append(handle)
        return handle

    def unregister(self, handle: NodeHandle) -> None:
        with self._lock:
            if self._nodes.get(handle.node_id) is handle:
                del self._nodes[handle.node_id]
                subs = self._subs.get(handle.topic, [])
                if handle in subs:
                    subs.remove(handle)
            handle.closed = True

    def subscribers(self, topic: str) -> int:
        with self._lock:
            return len(self._subs.get(topic, ()))

    def publish(self, handle: NodeHandle, msg: Message, msg_type: MessageType | None = None) -> int:
        if handle.closed or handle.role is not Role.PUBLISHER:
            raise RoleError(f"{handle.node_id} cannot publish on {handle.topic}")
        payload = encode_message(msg)
        kind = MessageType(msg_type) if msg_type is not None else message_type_of(msg)
        with self._topic_locks[handle.topic]:
            with self._lock:
                targets = list(self._subs.get(handle.topic, ()))
            handle._seq += 1
            d = Delivery(handle.topic, kind, payload, handle.node_id, handle._seq, self.clock())
            for sub in targets:
                sub.inbox.put(d)
        return len(targets)


def master_register(master: Master, node_id: str, topic: str, role: Role | str) -> NodeHandle:
    return master.register(node_id, topic, role)


def publish(handle: NodeHandle, msg: Message) -> int:
    return handle.publish(msg)


# --- monitoring node ---------------------------------------------------------------

@dataclass(frozen=True)
class Captured:
    message: Message
    capture_time: int  # ms, stamped by the bus clock when the monitor takes it
    delivery: Delivery = field(repr=False)


@dataclass(frozen=True)
class CaptureError:
    error: str
    capture_time: int
    delivery: Delivery = field(repr=False)


CaptureEvent = Captured | CaptureError


class CaptureStream:
    """A plain subscriber that parses everything it sees as ``msg_type``."""

    def __init__(self, master: Master, topic: str, msg_type: MessageType | str, node_id: str | None = None):
        self.msg_type = MessageType(msg_type)
        self.master = master
        self.handle = master.register(node_id or f"authros-monitor{topic}", topic, Role.SUBSCRIBER)

    def _event(self, d: Delivery) -> CaptureEvent:
        t = self.master.clock()
        try:
            return Captured(parse_message(d.payload, self.msg_type), t, d)
        except ParseError as exc:
            return CaptureError(str(exc), t, d)

    def poll(self, timeout: float | None = None) -> CaptureEvent | None:
        d = self.handle.receive(timeout)
        return None if d is None else self._event(d)

    def drain(self) -> list[CaptureEvent]:
        return [self._event(d) for d in self.handle.drain()]

    def __iter__(self) -> Iterator[CaptureEvent]:
        while not self.handle.closed:
            ev = self.poll(timeout=0.1)
            if ev is not None:
                yield ev

    def close(self) -> None:
        self.handle.close()


def monitor(master: Master, topic: str, msg_type: MessageType | str, node_id: str | None = None) -> CaptureStream:
    return CaptureStream(master, topic, msg_type, node_id)
