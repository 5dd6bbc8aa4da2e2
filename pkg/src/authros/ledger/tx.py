"""Accounts, contract calls and signed transactions."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Union

from ..crypto import DEFAULT_ID, CurvePoint, Sm2KeyPair, Sm2Signature, keccak256, sm2_sign, sm2_verify, sm3_hash
from ..crypto.entropy import Entropy
from ..wire import FrameError, decode_fields, encode_fields, read_u64, u64

ADDRESS_SIZE = 20
TX_BASE_GAS = 21000
TX_BYTE_GAS = 68


def derive_address(public_key: CurvePoint) -> bytes:
    """First 20 bytes of Keccak-256 over ``x || y`` of the public key."""
    if public_key.infinity or not public_key.is_on_curve():
        raise ValueError("cannot derive an address from an invalid public key")
    return keccak256(public_key.to_bytes()[1:])[:ADDRESS_SIZE]


def check_address(addr: bytes) -> bytes:
    if not isinstance(addr, (bytes, bytearray)) or len(addr) != ADDRESS_SIZE:
        raise ValueError("address must be 20 bytes")
    return bytes(addr)


# --- contract calls ----------------------------------------------------------

@dataclass(frozen=True)
class Register:
    token: bytes
    TAG = b"register"

    def fields(self) -> list[bytes]:
        return [self.token]


@dataclass(frozen=True)
class DataUpload:
    data: bytes
    token: bytes
    timestamp: bytes
    TAG = b"data_upload"

    def fields(self) -> list[bytes]:
        return [self.data, self.token, self.timestamp]


@dataclass(frozen=True)
class AuthorityGrant:
    grantee: bytes
    TAG = b"authority_grant"

    def fields(self) -> list[bytes]:
        return [self.grantee]


@dataclass(frozen=True)
class DataQuery:
    token: bytes
    target: bytes
    TAG = b"data_query"

    def fields(self) -> list[bytes]:
        return [self.token, self.target]


ContractCall = Union[Register, DataUpload, AuthorityGrant, DataQuery]
_CALLS = {cls.TAG: cls for cls in (Register, DataUpload, AuthorityGrant, DataQuery)}


def encode_call(call: ContractCall) -> bytes:
    return encode_fields([call.TAG, *call.fields()])


def decode_call(data: bytes) -> ContractCall:
    parts = decode_fields(data)
    if not parts or parts[0] not in _CALLS:
        raise FrameError("unknown contract call")
    cls = _CALLS[parts[0]]
    try:
        return cls(*parts[1:])
    except TypeError:
        raise FrameError(f"wrong arity for {parts[0].decode()}") from None


def intrinsic_gas(call: ContractCall) -> int:
    return TX_BASE_GAS + TX_BYTE_GAS * len(encode_call(call))


# --- transactions -------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    sender: bytes
    sender_key: CurvePoint
    nonce: int
    call: ContractCall
    gas_limit: int
    submitted_at: int
    signature: Sm2Signature = field(default=Sm2Signature(0, 0))

    def signing_payload(self) -> bytes:
        return encode_fields([
            self.sender, self.sender_key.to_bytes(), u64(self.nonce),
            encode_call(self.call), u64(self.gas_limit), u64(self.submitted_at),
        ])

    def encode(self) -> bytes:
        return self.encoded

    @cached_property
    def encoded(self) -> bytes:
        return encode_fields([self.signing_payload(), self.signature.to_bytes()])

    @classmethod
    def decode(cls, data: bytes) -> "Transaction":
        body, sig = decode_fields(data, 2)
        sender, key, nonce, call, gas, ts = decode_fields(body, 6)
        return cls(check_address(sender), CurvePoint.from_bytes(key), read_u64(nonce),
                   decode_call(call), read_u64(gas), read_u64(ts), Sm2Signature.from_bytes(sig))

    @cached_property
    def tx_hash(self) -> bytes:
        return sm3_hash(self.encoded)

    @property
    def size(self) -> int:
        return len(self.encoded)

    def signature_valid(self) -> bool:
        try:
            if derive_address(self.sender_key) != self.sender:
                return False
        except ValueError:
            return False
        return sm2_verify(self.sender_key, DEFAULT_ID, self.signing_payload(), self.signature)


def sign_transaction(
    keypair: Sm2KeyPair,
    nonce: int,
    call: ContractCall,
    *,
    submitted_at: int = 0,
    gas_limit: int | None = None,
    entropy: Entropy | None = None,
) -> Transaction:
    unsigned = Transaction(
        sender=derive_address(keypair.public_key),
        sender_key=keypair.public_key,
        nonce=nonce,
        call=call,
        gas_limit=intrinsic_gas(call) if gas_limit is None else gas_limit,
        submitted_at=submitted_at,
    )
    sig = sm2_sign(keypair.private_key, DEFAULT_ID, unsigned.signing_payload(), entropy,
                   public_key=keypair.public_key)
    return replace(unsigned, signature=sig)
