"""Rotating set of published SM2 system keys."""
from __future__ import annotations

import threading
from dataclasses import dataclass

from ..crypto import CurvePoint, Sm2KeyPair, keypair_from_private, sm2_keygen
from ..crypto.entropy import Entropy
from .errors import StaleSystemKey

HOUR_MS = 3_600_000


@dataclass(frozen=True)
class SystemKeyEntry:
    epoch: int
    public_key: CurvePoint


class SystemKeyRing:
    """Server side of the published key set.

    Epochs are ``clock_ms // rotation_period_ms``.  A key stays usable for
    ``grace_epochs`` epochs after it is superseded.
    """

    def __init__(self, entropy: Entropy, rotation_period_ms: int = HOUR_MS, grace_epochs: int = 1):
        if rotation_period_ms <= 0 or grace_epochs < 0:
            raise ValueError("rotation period must be positive and grace non-negative")
        self.entropy = entropy
        self.rotation_period_ms = rotation_period_ms
        self.grace_epochs = grace_epochs
        self._keys: dict[int, Sm2KeyPair] = {}
        self._lock = threading.Lock()

    @property
    def current_epoch(self) -> int:
        return max(self._keys) if self._keys else -1

    def publish(self, epoch: int) -> SystemKeyEntry:
        with self._lock:
            if epoch <= self.current_epoch:
                raise ValueError(f"epoch {epoch} is not newer than {self.current_epoch}")
            kp = sm2_keygen(self.entropy)
            self._keys[epoch] = kp
            return SystemKeyEntry(epoch, kp.public_key)

    def advance(self, now_ms: int) -> None:
        epoch = now_ms // self.rotation_period_ms
        if epoch > self.current_epoch:
            self.publish(epoch)

    def published(self) -> list[SystemKeyEntry]:
        with self._lock:
            return [SystemKeyEntry(e, kp.public_key) for e, kp in sorted(self._keys.items())]

    def current(self) -> SystemKeyEntry:
        e = self.current_epoch
        if e < 0:
            raise StaleSystemKey("no system key published yet")
        return SystemKeyEntry(e, self._keys[e].public_key)

    def private_for(self, epoch: int) -> int:
        with self._lock:
            kp = self._keys.get(epoch)
            if kp is None or epoch < self.current_epoch - self.grace_epochs:
                raise StaleSystemKey(f"stale system key (epoch {epoch})")
            return kp.private_key

    def to_dict(self) -> dict:
        return {
            "rotation_period_ms": self.rotation_period_ms,
            "grace_epochs": self.grace_epochs,
            "keys": {str(e): format(kp.private_key, "064x") for e, kp in self._keys.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict, entropy: Entropy) -> "SystemKeyRing":
        ring = cls(entropy, doc["rotation_period_ms"], doc["grace_epochs"])
        ring._keys = {int(e): keypair_from_private(int(d, 16)) for e, d in doc["keys"].items()}
        return ring


def publish_system_keys(server, epoch: int) -> SystemKeyEntry:
    return server.keyring.publish(epoch)
