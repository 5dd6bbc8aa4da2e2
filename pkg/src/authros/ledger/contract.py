"""The access-control contract as a deterministic state machine.

State transitions are pure: every ``contract_*`` mutator returns a new
:class:`ContractState` and leaves its input untouched.  Failures raise
:class:`ContractRevert` (or a subclass), mirroring a Solidity ``revert``.

Authorization rule for queries: the caller presents a token.  The query
succeeds iff that token is the target's registered token *and* it sits in
the caller's own token list, which happens either through self-registration
or through the target granting authority to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from ..crypto import sm3_hash
from ..wire import encode_fields
from .tx import AuthorityGrant, ContractCall, DataQuery, DataUpload, Register, check_address

_EMPTY_HEAD = bytes(32)


class ContractRevert(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class AccessDenied(ContractRevert):
    def __init__(self, reason: str = "access denied"):
        super().__init__(reason)


class UnknownTarget(ContractRevert):
    def __init__(self, reason: str = "unknown target"):
        super().__init__(reason)


@dataclass(frozen=True)
class DigestRecord:
    digest: bytes
    uploader_token: bytes
    timestamp: bytes


def _frozen(d: dict) -> Mapping:
    return MappingProxyType(d)


@dataclass(frozen=True)
class ContractState:
    registry: Mapping[bytes, bytes] = field(default_factory=lambda: _frozen({}))
    token_lists: Mapping[bytes, tuple[bytes, ...]] = field(default_factory=lambda: _frozen({}))
    digest_store: Mapping[bytes, tuple[DigestRecord, ...]] = field(default_factory=lambda: _frozen({}))
    # running hash over each address's digest list, so the state root stays O(accounts)
    store_heads: Mapping[bytes, bytes] = field(default_factory=lambda: _frozen({}))

    def is_registered(self, addr: bytes) -> bool:
        return addr in self.registry

    def commitment(self) -> bytes:
        parts = []
        for addr in sorted(self.registry):
            parts.append(encode_fields([b"R", addr, self.registry[addr]]))
        for addr in sorted(self.token_lists):
            parts.append(encode_fields([b"T", addr, *self.token_lists[addr]]))
        for addr in sorted(self.store_heads):
            parts.append(encode_fields([b"D", addr, self.store_heads[addr],
                                        len(self.digest_store[addr]).to_bytes(8, "big")]))
        return sm3_hash(b"".join(parts))


def _with(mapping: Mapping, key, value) -> Mapping:
    d = dict(mapping)
    d[key] = value
    return _frozen(d)


def contract_register(state: ContractState, caller: bytes, token: bytes) -> ContractState:
    check_address(caller)
    if not token:
        raise ContractRevert("empty token")
    if caller in state.registry:
        raise ContractRevert("already registered")
    tokens = state.token_lists.get(caller, ())
    if token not in tokens:
        tokens = tokens + (token,)
    return replace(
        state,
        registry=_with(state.registry, caller, token),
        token_lists=_with(state.token_lists, caller, tokens),
    )


def contract_data_upload(
    state: ContractState, caller: bytes, digest: bytes, token: bytes, timestamp: bytes
) -> ContractState:
    registered = state.registry.get(caller)
    if registered is None:
        raise ContractRevert("caller not registered")
    if token != registered:
        raise ContractRevert("token mismatch")
    record = DigestRecord(digest, token, timestamp)
    head = state.store_heads.get(caller, _EMPTY_HEAD)
    new_head = sm3_hash(head + encode_fields([digest, token, timestamp]))
    return replace(
        state,
        digest_store=_with(state.digest_store, caller, state.digest_store.get(caller, ()) + (record,)),
        store_heads=_with(state.store_heads, caller, new_head),
    )


def contract_authority_grant(state: ContractState, caller: bytes, grantee: bytes) -> ContractState:
    check_address(grantee)
    token = state.registry.get(caller)
    if token is None:
        raise ContractRevert("caller not registered")
    tokens = state.token_lists.get(grantee, ())
    if token in tokens:
        return state
    return replace(state, token_lists=_with(state.token_lists, grantee, tokens + (token,)))


def contract_data_query(
    state: ContractState, caller: bytes, caller_token: bytes, target: bytes
) -> list[tuple[bytes, bytes]]:
    """Return ``[(digest, timestamp), ...]`` shared by ``target``."""
    target_token = state.registry.get(target)
    if target_token is None:
        raise UnknownTarget()
    if caller_token != target_token or caller_token not in state.token_lists.get(caller, ()):
        raise AccessDenied()
    return [(r.digest, r.timestamp) for r in state.digest_store.get(target, ())]


def apply_call(state: ContractState, caller: bytes, call: ContractCall) -> ContractState:
    if isinstance(call, Register):
        return contract_register(state, caller, call.token)
    if isinstance(call, DataUpload):
        return contract_data_upload(state, caller, call.data, call.token, call.timestamp)
    if isinstance(call, AuthorityGrant):
        return contract_authority_grant(state, caller, call.grantee)
    if isinstance(call, DataQuery):
        contract_data_query(state, caller, call.token, call.target)
        return state
    raise TypeError(f"unsupported call {call!r}")
