"""Client side: key allocation, envelope construction, grants and shared-data decryption."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..crypto import (
    DEFAULT_ID,
    CorruptCiphertext,
    InvalidCiphertext,
    Sm2KeyPair,
    Sm2Signature,
    open_sealed,
    seal,
    sm2_decrypt,
    sm2_encrypt,
    sm2_keygen,
    sm2_sign,
    sm3_hash,
)
from ..crypto.entropy import Entropy, default_entropy
from ..wire import FrameError, encode_fields
from .errors import CorruptEnvelope, DecryptError, IdentityCheckFailed
from .frames import Command, InnerFrame, KeyAllocMessage, OuterFrame, PlainRecord, keyalloc_plaintext
from .keys import SystemKeyEntry


def onchain_token(sm4_key: bytes) -> bytes:
    """What the contract stores in place of the SM4 key itself."""
    return sm3_hash(sm4_key)


@dataclass(frozen=True)
class Credentials:
    """Everything a user holds privately: name/token pair, signing key and data key."""
    name: str
    token: bytes
    keypair: Sm2KeyPair
    sm4_key: bytes

    @classmethod
    def generate(cls, name: str, token: bytes, entropy: Entropy | None = None) -> "Credentials":
        if not name or not token:
            raise ValueError("name and token must be non-empty")
        entropy = default_entropy(entropy)
        return cls(name, token, sm2_keygen(entropy), entropy.token_bytes(16))

    @property
    def label(self) -> bytes:
        # the signer's distinguishing identifier once a username is bound
        return self.name.encode()


@dataclass
class SharedRecord:
    digest: bytes
    capture_time: int
    block_height: int | None


@dataclass
class UserIdentity:
    name: str
    sigma: bytes
    addr: bytes
    v: dict[str, bytes] = field(default_factory=dict)
    d: list[SharedRecord] = field(default_factory=list)


def key_alloc_client(
    sm4_key: bytes,
    keypair: Sm2KeyPair,
    system_key: SystemKeyEntry,
    command: Command = Command.KEYALLOC,
    entropy: Entropy | None = None,
) -> KeyAllocMessage:
    ct = sm2_encrypt(system_key.public_key, keyalloc_plaintext(sm4_key, keypair.public_key), entropy).to_bytes()
    sig = sm2_sign(keypair.private_key, DEFAULT_ID, ct, entropy, public_key=keypair.public_key)
    return KeyAllocMessage(ct, sig, system_key.epoch, command)


@dataclass(frozen=True)
class TransferEnvelope:
    nd1: PlainRecord
    ct1: bytes
    sig: Sm2Signature
    nd2: InnerFrame
    ct2: bytes
    nd3: OuterFrame

    def wire(self) -> bytes:
        return self.nd3.encode()


def build_transfer(
    creds: Credentials,
    captured,
    capture_time: int,
    command: Command = Command.UPLOAD,
    entropy: Entropy | None = None,
) -> TransferEnvelope:
    entropy = default_entropy(entropy)
    nd1 = captured if isinstance(captured, PlainRecord) else PlainRecord.from_message(captured)
    ct1 = seal(creds.sm4_key, nd1.encode(), entropy.token_bytes(16))
    sig = sm2_sign(creds.keypair.private_key, creds.label, ct1, entropy, public_key=creds.keypair.public_key)
    nd2 = InnerFrame(ct1, nd1.msg_type, creds.token, capture_time, command, sig)
    ct2 = seal(creds.sm4_key, nd2.encode(), entropy.token_bytes(16))
    return TransferEnvelope(nd1, ct1, sig, nd2, ct2, OuterFrame(ct2, creds.name))


def open_transfer(sm4_key: bytes, wire: bytes) -> TransferEnvelope:
    """Peel every layer of an envelope (the server only needs the outer two)."""
    try:
        nd3 = OuterFrame.decode(wire)
        nd2 = InnerFrame.decode(open_sealed(sm4_key, nd3.ct2))
        nd1 = PlainRecord.decode(open_sealed(sm4_key, nd2.ct1))
    except (FrameError, CorruptCiphertext) as exc:
        raise CorruptEnvelope(str(exc)) from None
    return TransferEnvelope(nd1, nd2.ct1, nd2.signature, nd2, nd3.ct2, nd3)


def decrypt_shared(ct1: bytes, sm4_key: bytes) -> PlainRecord:
    try:
        return PlainRecord.decode(open_sealed(sm4_key, ct1))
    except (CorruptCiphertext, FrameError) as exc:
        raise DecryptError(f"cannot decrypt shared record: {exc}") from None


def request_payload(command: Command, name: str, *fields: bytes) -> bytes:
    return encode_fields([bytes([command]), name.encode(), *fields])


def sign_request(creds: Credentials, command: Command, *fields: bytes, entropy: Entropy | None = None) -> Sm2Signature:
    return sm2_sign(creds.keypair.private_key, creds.label, request_payload(command, creds.name, *fields),
                    entropy, public_key=creds.keypair.public_key)


class Client:
    """A CURA's device: holds credentials and the identity the server issued."""

    def __init__(self, creds: Credentials, identity: UserIdentity | None = None, entropy: Entropy | None = None):
        self.creds = creds
        self.identity = identity
        self.entropy = default_entropy(entropy)

    @classmethod
    def create(cls, name: str, token: bytes, entropy: Entropy | None = None) -> "Client":
        return cls(Credentials.generate(name, token, entropy), entropy=entropy)

    @property
    def name(self) -> str:
        return self.creds.name

    def _need_identity(self) -> UserIdentity:
        if self.identity is None:
            raise IdentityCheckFailed("client is not registered")
        return self.identity

    def register(self, server) -> UserIdentity:
        msg = key_alloc_client(self.creds.sm4_key, self.creds.keypair, server.keyring.current(),
                               entropy=self.entropy)
        alloc_id = server.key_alloc_server(msg.encode())
        self.identity = server.register_user(self.name, self.creds.token, alloc_id)
        return self.identity

    def share(self, server, captured, capture_time: int):
        ident = self._need_identity()
        env = build_transfer(self.creds, captured, capture_time, entropy=self.entropy)
        receipt = server.receive_transfer(env.wire())
        ident.d.append(SharedRecord(receipt.digest, capture_time, receipt.height))
        return receipt

    def grant(self, server, grantee: str | bytes):
        self._need_identity()
        ref = grantee.encode() if isinstance(grantee, str) else grantee
        sig = sign_request(self.creds, Command.GRANT, ref, entropy=self.entropy)
        return server.grant_authority(self.name, grantee, sig)

    def sync_grants(self, server) -> list[str]:
        """Collect granted keys waiting at the server into ``v``."""
        ident = self._need_identity()
        added = []
        for granter, blob in server.collect_grants(self.name):
            try:
                key = sm2_decrypt(self.creds.keypair.private_key, blob)
            except InvalidCiphertext:
                continue
            if ident.v.get(granter) != key:
                ident.v[granter] = key
                added.append(granter)
        return added

    def key_for(self, target: str) -> bytes:
        ident = self._need_identity()
        if target == self.name:
            return ident.sigma
        # without a grant the client can only present its own token
        return ident.v.get(target, ident.sigma)

    def query(self, server, target: str, digest: bytes | None = None) -> bytes | None:
        self._need_identity()
        presented = onchain_token(self.key_for(target))
        sig = sign_request(self.creds, Command.QUERY, target.encode(), presented, digest or b"",
                           entropy=self.entropy)
        return server.query_and_check(self.name, target, presented, sig, digest)

    def fetch(self, server, target: str, digest: bytes | None = None) -> PlainRecord | None:
        ct1 = self.query(server, target, digest)
        return None if ct1 is None else decrypt_shared(ct1, self.key_for(target))
