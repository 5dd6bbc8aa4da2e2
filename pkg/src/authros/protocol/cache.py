"""Content-addressed ciphertext cache with quarantine."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from ..crypto import sm3_hash


@dataclass(frozen=True)
class CacheEntry:
    ciphertext: bytes
    owner: bytes
    upload_time: int


class CiphertextCache:
    """Maps ``sm3(ciphertext)`` to the ciphertext; no eviction.

    Once a read finds an entry whose bytes no longer hash to its key the
    entry is quarantined and every later read of it fails, even if the bytes
    are put back.
    """

    def __init__(self):
        self._store: dict[bytes, CacheEntry] = {}
        self._quarantine: set[bytes] = set()
        self._lock = threading.Lock()

    def put(self, ciphertext: bytes, owner: bytes, upload_time: int) -> bytes:
        digest = sm3_hash(ciphertext)
        with self._lock:
            self._store.setdefault(digest, CacheEntry(bytes(ciphertext), owner, upload_time))
        return digest

    def get(self, digest: bytes) -> CacheEntry | None:
        with self._lock:
            return self._store.get(digest)

    def __contains__(self, digest: bytes) -> bool:
        return digest in self._store

    def __len__(self) -> int:
        return len(self._store)

    def digests(self) -> list[bytes]:
        with self._lock:
            return list(self._store)

    def quarantine(self, digest: bytes) -> None:
        with self._lock:
            self._quarantine.add(digest)

    def is_quarantined(self, digest: bytes) -> bool:
        return digest in self._quarantine

    def tamper(self, digest: bytes, position: int, xor: int = 0x01) -> None:
        """Test hook: flip bits of one stored byte in place."""
        if not xor & 0xFF:
            raise ValueError("xor mask must change the byte")
        with self._lock:
            entry = self._store[digest]
            data = bytearray(entry.ciphertext)
            data[position % len(data)] ^= xor & 0xFF
            self._store[digest] = replace(entry, ciphertext=bytes(data))

    def drop(self, digest: bytes) -> None:
        with self._lock:
            self._store.pop(digest, None)

    # --- snapshot ------------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "entries": [
                    {"digest": d.hex(), "ciphertext": e.ciphertext.hex(), "owner": e.owner.hex(),
                     "upload_time": e.upload_time}
                    for d, e in self._store.items()
                ],
                "quarantine": sorted(d.hex() for d in self._quarantine),
            }

    @classmethod
    def from_dict(cls, doc: dict) -> "CiphertextCache":
        cache = cls()
        for e in doc.get("entries", []):
            # keys are taken from the file, not recomputed, so tampered snapshots stay detectable
            cache._store[bytes.fromhex(e["digest"])] = CacheEntry(
                bytes.fromhex(e["ciphertext"]), bytes.fromhex(e["owner"]), int(e["upload_time"]))
        cache._quarantine = {bytes.fromhex(d) for d in doc.get("quarantine", [])}
        return cache

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "CiphertextCache":
        return cls.from_dict(json.loads(Path(path).read_text()))
