"""Monitoring node glue: captured bus traffic in, upload receipts out."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from ..rosbus import CaptureError, CaptureStream, Captured
from .client import Client
from .errors import ProtocolError
from .server import AuthServer, TransferReceipt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShareFailure:
    error: str
    capture_time: int


def share_events(client: Client, server: AuthServer, events: Iterable) -> list[TransferReceipt | ShareFailure]:
    """Push each captured message through the transfer pipeline; errors do not stop the stream."""
    out: list[TransferReceipt | ShareFailure] = []
    for ev in events:
        if isinstance(ev, CaptureError):
            log.warning("parse error on %s: %s", ev.delivery.topic, ev.error)
            out.append(ShareFailure(f"parse error: {ev.error}", ev.capture_time))
            continue
        assert isinstance(ev, Captured)
        try:
            out.append(client.share(server, ev.message, ev.capture_time))
        except ProtocolError as exc:
            log.warning("share failed: %s", exc)
            out.append(ShareFailure(str(exc), ev.capture_time))
    return out


def monitor_and_share(client: Client, server: AuthServer, stream: CaptureStream):
    return share_events(client, server, stream.drain())
