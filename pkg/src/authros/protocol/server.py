"""Server side: key allocation, registration, transfer intake, grants and checked queries."""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Callable

from ..crypto import (
    DEFAULT_ID,
    CorruptCiphertext,
    CurvePoint,
    InvalidCiphertext,
    Sm2KeyPair,
    Sm2Signature,
    keypair_from_private,
    open_sealed,
    sm2_decrypt,
    sm2_encrypt,
    sm2_keygen,
    sm2_verify,
    sm3_hash,
)
from ..crypto.entropy import Entropy, default_entropy
from ..ledger import AccessDenied, AuthorityGrant, DataUpload, Network, Register, UnknownTarget
from ..ledger import ReceiptStatus, derive_address, sign_transaction
from ..wire import FrameError
from .cache import CiphertextCache
from .client import UserIdentity, onchain_token, request_payload
from .errors import (
    AuthenticityCheckFailed,
    AuthorizationError,
    CacheMiss,
    CorruptEnvelope,
    DigestMismatch,
    DuplicateName,
    ForgedNodeData,
    IdentityCheckFailed,
    InvalidKeyAlloc,
    LedgerError,
    LedgerRevert,
    NoPendingAlloc,
    ProtocolError,
    UnknownTargetError,
    UploadUnconfirmed,
)
from .frames import Command, InnerFrame, KeyAllocMessage, OuterFrame, split_keyalloc_plaintext, timestamp_bytes
from .keys import HOUR_MS, SystemKeyRing


def wall_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class ServerConfig:
    rotation_period_ms: int = HOUR_MS
    grace_epochs: int = 1
    ledger_timeout_s: float = 10.0
    via: int | None = None  # ledger node the server submits through
    cache_snapshot: str | None = None


@dataclass
class PendingAlloc:
    sm4_key: bytes
    public_key: CurvePoint
    epoch: int


@dataclass
class UserRecord:
    """Server-held mapping ``N -> (t, K_C, P_C, Addr)`` plus the custodial account key."""
    name: str
    token: bytes
    sm4_key: bytes
    public_key: CurvePoint
    account: Sm2KeyPair

    @property
    def address(self) -> bytes:
        return derive_address(self.account.public_key)


@dataclass(frozen=True)
class TransferReceipt:
    digest: bytes
    height: int
    tx_hash: bytes


@dataclass(frozen=True)
class GrantResult:
    granter: str
    grantee: str
    height: int


class AuthServer:
    def __init__(
        self,
        network: Network,
        config: ServerConfig | None = None,
        *,
        entropy: Entropy | None = None,
        clock: Callable[[], int] = wall_ms,
        keyring: SystemKeyRing | None = None,
        cache: CiphertextCache | None = None,
    ):
        self.network = network
        self.config = config or ServerConfig()
        self.entropy = default_entropy(entropy)
        self.clock = clock
        self.keyring = keyring or SystemKeyRing(self.entropy, self.config.rotation_period_ms,
                                                self.config.grace_epochs)
        self.cache = cache or CiphertextCache()
        self.users: dict[str, UserRecord] = {}
        self.by_address: dict[bytes, str] = {}
        self.pending: dict[bytes, PendingAlloc] = {}
        self.mailbox: dict[str, list[tuple[str, bytes]]] = {}
        self._lock = threading.Lock()
        self._user_locks: dict[str, threading.Lock] = {}
        self.keyring.advance(self.clock())

    # --- helpers -----------------------------------------------------------

    def _user_lock(self, name: str) -> threading.Lock:
        with self._lock:
            return self._user_locks.setdefault(name, threading.Lock())

    def _user(self, name: str) -> UserRecord:
        rec = self.users.get(name)
        if rec is None:
            raise IdentityCheckFailed(f"identity check failed: unknown name {name!r}")
        return rec

    def _resolve(self, ref: str | bytes) -> UserRecord:
        if isinstance(ref, bytes):
            name = self.by_address.get(ref)
            if name is None:
                raise IdentityCheckFailed("identity check failed: unknown address")
            return self.users[name]
        return self._user(ref)

    def _check_request(self, rec: UserRecord, sig: Sm2Signature, command: Command, *fields: bytes) -> None:
        if not sm2_verify(rec.public_key, rec.name.encode(), request_payload(command, rec.name, *fields), sig):
            raise AuthenticityCheckFailed()

    def _transact(self, rec: UserRecord, call, timeout: float | None = None, *, unconfirmed=None):
        """Submit a call from ``rec``'s custodial account and wait for inclusion."""
        acct = rec.account
        sender = derive_address(acct.public_key)
        nonce = self.network.next_nonce(sender, self.config.via)
        tx = sign_transaction(acct, nonce, call, submitted_at=self.clock(), entropy=self.entropy)
        receipt = self.network.submit(tx, self.config.via)
        receipt.wait(self.config.ledger_timeout_s if timeout is None else timeout)
        if receipt.status is ReceiptStatus.REJECTED:
            raise LedgerError(f"ledger rejected transaction: {receipt.reason}")
        if receipt.status is not ReceiptStatus.INCLUDED:
            if unconfirmed is not None:
                raise unconfirmed(receipt)
            raise LedgerError("ledger transaction timed out")
        if not receipt.success:
            raise LedgerRevert(f"ledger transaction reverted: {receipt.reason}")
        return receipt

    # --- key allocation and registration -----------------------------------

    def key_alloc_server(self, frame: bytes | KeyAllocMessage) -> bytes:
        """Check a key-allocation message; returns the pending-allocation id."""
        self.keyring.advance(self.clock())
        try:
            msg = frame if isinstance(frame, KeyAllocMessage) else KeyAllocMessage.decode(frame)
        except FrameError as exc:
            raise InvalidKeyAlloc(f"invalid ciphertext: {exc}") from None
        if msg.command is not Command.KEYALLOC:
            raise InvalidKeyAlloc("invalid ciphertext: wrong command")
        d_s = self.keyring.private_for(msg.ps_id)
        try:
            sm4_key, p_c = split_keyalloc_plaintext(sm2_decrypt(d_s, msg.ct))
        except (InvalidCiphertext, FrameError, ValueError) as exc:
            raise InvalidKeyAlloc(f"invalid ciphertext: {exc}") from None
        if not sm2_verify(p_c, DEFAULT_ID, msg.ct, msg.signature):
            raise AuthenticityCheckFailed()
        alloc_id = sm3_hash(p_c.to_bytes())
        with self._lock:
            self.pending[alloc_id] = PendingAlloc(sm4_key, p_c, msg.ps_id)
        return alloc_id

    def register_user(self, name: str, token: bytes, alloc_id: bytes) -> UserIdentity:
        if not name or not token:
            raise IdentityCheckFailed("name and token must be non-empty")
        with self._user_lock(name):
            with self._lock:
                if name in self.users:
                    raise DuplicateName(f"name {name!r} already registered")
                alloc = self.pending.get(alloc_id)
                if alloc is None:
                    raise NoPendingAlloc()
            account = sm2_keygen(self.entropy)  # an unused account address held for this user
            rec = UserRecord(name, token, alloc.sm4_key, alloc.public_key, account)
            self._transact(rec, Register(onchain_token(alloc.sm4_key)))
            with self._lock:
                self.pending.pop(alloc_id, None)
                self.users[name] = rec
                self.by_address[rec.address] = name
        return UserIdentity(name=name, sigma=alloc.sm4_key, addr=rec.address)

    # --- transfers ------------------------------------------------------------

    def receive_transfer(self, wire: bytes) -> TransferReceipt:
        try:
            nd3 = OuterFrame.decode(wire)
        except FrameError as exc:
            raise CorruptEnvelope(f"corrupt envelope: {exc}") from None
        rec = self._user(nd3.name)
        with self._user_lock(rec.name):
            try:
                nd2 = InnerFrame.decode(open_sealed(rec.sm4_key, nd3.ct2))
            except (CorruptCiphertext, FrameError) as exc:
                raise CorruptEnvelope(f"corrupt envelope: {exc}") from None
            if not sm2_verify(rec.public_key, rec.name.encode(), nd2.ct1, nd2.signature):
                raise ForgedNodeData()
            if nd2.token != rec.token:
                raise IdentityCheckFailed("identity check failed: token mismatch")
            if nd2.command is not Command.UPLOAD:
                raise CorruptEnvelope("corrupt envelope: not an upload")
            digest = self.cache.put(nd2.ct1, rec.address, nd2.capture_time)
            call = DataUpload(digest, onchain_token(rec.sm4_key), timestamp_bytes(nd2.capture_time))
            receipt = self._transact(rec, call, unconfirmed=lambda r: UploadUnconfirmed(digest, r))
        return TransferReceipt(digest, receipt.height, receipt.tx_hash)

    # --- grants -------------------------------------------------------------

    def grant_authority(self, granter: str, grantee: str | bytes, sig: Sm2Signature) -> GrantResult:
        rec = self._user(granter)
        ref = grantee.encode() if isinstance(grantee, str) else grantee
        self._check_request(rec, sig, Command.GRANT, ref)
        try:
            target = self._resolve(grantee)
        except IdentityCheckFailed:
            raise IdentityCheckFailed("unknown grantee") from None
        with self._user_lock(rec.name):
            receipt = self._transact(rec, AuthorityGrant(target.address))
        blob = sm2_encrypt(target.public_key, rec.sm4_key, self.entropy).to_bytes()
        with self._lock:
            box = self.mailbox.setdefault(target.name, [])
            if not any(g == rec.name for g, _ in box):
                box.append((rec.name, blob))
        return GrantResult(rec.name, target.name, receipt.height)

    def collect_grants(self, name: str) -> list[tuple[str, bytes]]:
        self._user(name)
        with self._lock:
            return self.mailbox.pop(name, [])

    # --- queries ------------------------------------------------------------

    def query_and_check(
        self, requester: str, target: str, presented: bytes, sig: Sm2Signature, digest: bytes | None = None
    ) -> bytes | None:
        """Return the cached ciphertext whose hash matches the on-chain digest.

        ``digest`` picks one record; by default the target's latest upload.
        Returns None when the target has not shared anything yet.
        """
        rec = self._user(requester)
        self._check_request(rec, sig, Command.QUERY, target.encode(), presented, digest or b"")
        if target not in self.users:
            raise UnknownTargetError()
        tgt = self.users[target]
        try:
            rows = self.network.query(rec.address, presented, tgt.address, self.config.via)
        except UnknownTarget:
            raise UnknownTargetError() from None
        except AccessDenied:
            raise AuthorizationError() from None
        if not rows:
            return None
        if digest is None:
            digest = rows[-1][0]
        elif digest not in {d for d, _ in rows}:
            raise CacheMiss("digest is not on chain for this target")
        return self.checked_read(digest)

    def checked_read(self, digest: bytes) -> bytes:
        if self.cache.is_quarantined(digest):
            raise DigestMismatch()
        entry = self.cache.get(digest)
        if entry is None:
            raise CacheMiss()
        if sm3_hash(entry.ciphertext) != digest:
            self.cache.quarantine(digest)
            raise DigestMismatch()
        return entry.ciphertext

    # --- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "keyring": self.keyring.to_dict(),
                "users": [
                    {"name": r.name, "token": r.token.hex(), "sm4_key": r.sm4_key.hex(),
                     "public_key": r.public_key.to_bytes().hex(),
                     "account_key": format(r.account.private_key, "064x")}
                    for r in self.users.values()
                ],
                "pending": [
                    {"id": i.hex(), "sm4_key": p.sm4_key.hex(), "public_key": p.public_key.to_bytes().hex(),
                     "epoch": p.epoch}
                    for i, p in self.pending.items()
                ],
                "mailbox": {n: [[g, b.hex()] for g, b in box] for n, box in self.mailbox.items()},
                "cache": self.cache.to_dict(),
            }

    @classmethod
    def from_dict(cls, doc: dict, network: Network, config: ServerConfig | None = None, **kw) -> "AuthServer":
        entropy = default_entropy(kw.get("entropy"))
        keyring = SystemKeyRing.from_dict(doc["keyring"], entropy)
        cache = CiphertextCache.from_dict(doc.get("cache", {}))
        server = cls(network, config, keyring=keyring, cache=cache, **kw)
        for u in doc.get("users", []):
            rec = UserRecord(u["name"], bytes.fromhex(u["token"]), bytes.fromhex(u["sm4_key"]),
                             CurvePoint.from_bytes(bytes.fromhex(u["public_key"])),
                             keypair_from_private(int(u["account_key"], 16)))
            server.users[rec.name] = rec
            server.by_address[rec.address] = rec.name
        for p in doc.get("pending", []):
            server.pending[bytes.fromhex(p["id"])] = PendingAlloc(
                bytes.fromhex(p["sm4_key"]), CurvePoint.from_bytes(bytes.fromhex(p["public_key"])), p["epoch"])
        server.mailbox = {n: [(g, bytes.fromhex(b)) for g, b in box] for n, box in doc.get("mailbox", {}).items()}
        return server


def register_user(server: AuthServer, name: str, token: bytes, alloc_id: bytes) -> UserIdentity:
    return server.register_user(name, token, alloc_id)


def receive_transfer(server: AuthServer, wire: bytes) -> TransferReceipt:
    return server.receive_transfer(wire)


__all__ = ["AuthServer", "ServerConfig", "TransferReceipt", "GrantResult", "UserRecord", "ProtocolError"]
