"""Blocks, PoW/PoA production, block verification and fork choice."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

from ..crypto import DEFAULT_ID, CurvePoint, Sm2KeyPair, Sm2Signature, sm2_sign, sm2_verify, sm3_hash
from ..crypto.entropy import Entropy, default_entropy
from ..crypto.sm3 import search_nonce
from ..wire import FrameError, decode_fields, encode_fields, read_u64, u64
from .contract import ContractRevert, ContractState, apply_call
from .tx import Transaction, check_address, derive_address, intrinsic_gas

ZERO_HASH = bytes(32)
HASH_SPACE = 1 << 256
POW_CHUNK = 4096


class ConsensusMode(str, Enum):
    POW = "pow"
    POA = "poa"


class InvalidBlock(ValueError):
    pass


@dataclass(frozen=True)
class ConsensusConfig:
    mode: ConsensusMode = ConsensusMode.POA
    difficulty: int = 1 << 16
    block_gas_limit: int = 0xFFFFFFFF
    validators: tuple[bytes, ...] = ()
    target_block_interval_ms: int = 1000
    node_count: int = 3

    def __post_init__(self):
        object.__setattr__(self, "mode", ConsensusMode(self.mode))
        object.__setattr__(self, "validators", tuple(check_address(v) for v in self.validators))
        if self.difficulty < 1:
            raise ValueError("difficulty must be >= 1")
        if self.mode is ConsensusMode.POA and not self.validators:
            raise ValueError("PoA requires at least one validator")
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")

    def slot_validator(self, height: int) -> bytes:
        # heights start at 1 after genesis; height 1 belongs to validators[0]
        return self.validators[(height - 1) % len(self.validators)]


# --- world state ---------------------------------------------------------------

@dataclass(frozen=True)
class WorldState:
    contract: ContractState = field(default_factory=ContractState)
    nonces: Mapping[bytes, int] = field(default_factory=dict)

    def next_nonce(self, addr: bytes) -> int:
        return self.nonces.get(addr, 0)

    @cached_property
    def root(self) -> bytes:
        parts = [encode_fields([addr, u64(self.nonces[addr])]) for addr in sorted(self.nonces)]
        return sm3_hash(encode_fields([b"".join(parts), self.contract.commitment()]))


@dataclass(frozen=True)
class TxReceipt:
    tx_hash: bytes
    success: bool
    reason: str = ""


def apply_transactions(
    state: WorldState,
    txs: Sequence[Transaction],
    cfg: ConsensusConfig,
    verified: set | None = None,
) -> tuple[WorldState, list[TxReceipt]]:
    """Execute ``txs`` in order; raise :class:`InvalidBlock` on any invalid tx.

    A contract revert does not invalidate the block: the tx is included with a
    failed receipt and still consumes its nonce.  ``verified`` is an optional
    cache of tx hashes whose signatures were already checked.
    """
    contract = state.contract
    nonces = dict(state.nonces)
    receipts = []
    gas_used = 0
    for tx in txs:
        h = tx.tx_hash
        if verified is None or h not in verified:
            if not tx.signature_valid():
                raise InvalidBlock("bad transaction signature")
            if verified is not None:
                verified.add(h)
        if tx.nonce != nonces.get(tx.sender, 0):
            raise InvalidBlock("bad transaction nonce")
        gas = intrinsic_gas(tx.call)
        if tx.gas_limit < gas or tx.gas_limit > cfg.block_gas_limit:
            raise InvalidBlock("transaction gas out of bounds")
        gas_used += gas
        if gas_used > cfg.block_gas_limit:
            raise InvalidBlock("block gas limit exceeded")
        nonces[tx.sender] = tx.nonce + 1
        try:
            contract = apply_call(contract, tx.sender, tx.call)
            receipts.append(TxReceipt(h, True))
        except ContractRevert as exc:
            receipts.append(TxReceipt(h, False, exc.reason))
    return WorldState(contract, nonces), receipts


# --- blocks -------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    parent_hash: bytes
    height: int
    difficulty: int
    timestamp: int
    tx_root: bytes
    state_root: bytes
    txs: tuple[Transaction, ...] = ()
    validator: bytes = b""
    validator_key: bytes = b""
    seal: bytes = b""
    nonce: int = 0

    def seal_prefix(self) -> bytes:
        return encode_fields([
            self.parent_hash, u64(self.height), self.difficulty.to_bytes(32, "big"),
            u64(self.timestamp), self.tx_root, self.state_root, self.validator, self.validator_key,
        ])

    def header_bytes(self) -> bytes:
        return self.seal_prefix() + encode_fields([self.seal]) + u64(self.nonce)

    @cached_property
    def block_hash(self) -> bytes:
        return sm3_hash(self.header_bytes())

    def encode(self) -> bytes:
        return encode_fields([self.header_bytes(), encode_fields([tx.encode() for tx in self.txs])])

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        header, body = decode_fields(data, 2)
        if len(header) < 8:
            raise FrameError("header too short")
        prefix_and_seal, nonce = header[:-8], header[-8:]
        (parent, height, diff, ts, tx_root, state_root, validator, vkey, seal) = decode_fields(
            prefix_and_seal, 9)
        txs = tuple(Transaction.decode(t) for t in decode_fields(body))
        return cls(parent, read_u64(height), int.from_bytes(diff, "big"), read_u64(ts), tx_root,
                   state_root, txs, validator, vkey, seal, read_u64(nonce))

    @property
    def size(self) -> int:
        return len(self.encode())


def tx_root(txs: Iterable[Transaction]) -> bytes:
    return sm3_hash(b"".join(tx.tx_hash for tx in txs))


def pow_target(difficulty: int) -> int:
    return HASH_SPACE // difficulty


def meets_difficulty(block_hash: bytes, difficulty: int) -> bool:
    return int.from_bytes(block_hash, "big") < pow_target(difficulty)


def make_genesis(state: WorldState, difficulty: int = 1, timestamp: int = 0) -> Block:
    return Block(ZERO_HASH, 0, difficulty, timestamp, tx_root(()), state.root)


def select_transactions(
    state: WorldState, pending: Iterable[Transaction], gas_limit: int
) -> list[Transaction]:
    """FIFO selection of executable txs, bounded by the block gas limit."""
    expected: dict[bytes, int] = {}
    chosen = []
    gas = 0
    for tx in pending:
        want = expected.get(tx.sender, state.next_nonce(tx.sender))
        if tx.nonce != want:
            continue
        cost = intrinsic_gas(tx.call)
        if tx.gas_limit < cost or tx.gas_limit > gas_limit or gas + cost > gas_limit:
            continue
        gas += cost
        expected[tx.sender] = want + 1
        chosen.append(tx)
    return chosen


@dataclass
class ChainView:
    """The minimum a producer needs: the head block and its post-state."""
    head: Block
    state: WorldState


def _template(view: ChainView, pending, cfg: ConsensusConfig, timestamp: int, verified):
    if verified is None:
        verified = set()
    txs = select_transactions(view.state, pending, cfg.block_gas_limit)
    # drop anything whose signature fails rather than producing an invalid block
    good = []
    for tx in txs:
        if tx.tx_hash in verified:
            good.append(tx)
        elif tx.signature_valid():
            verified.add(tx.tx_hash)
            good.append(tx)
    txs = select_transactions(view.state, good, cfg.block_gas_limit)
    post, _ = apply_transactions(view.state, txs, cfg, verified)
    return Block(
        parent_hash=view.head.block_hash,
        height=view.head.height + 1,
        difficulty=cfg.difficulty if cfg.mode is ConsensusMode.POW else 1,
        timestamp=timestamp,
        tx_root=tx_root(txs),
        state_root=post.root,
        txs=tuple(txs),
    ), post


def produce_block_pow(
    view: ChainView,
    pending: Iterable[Transaction],
    cfg: ConsensusConfig,
    entropy: Entropy | None = None,
    *,
    timestamp: int = 0,
    cancel: threading.Event | None = None,
    verified: set | None = None,
    stats: dict | None = None,
) -> tuple[Block, WorldState] | None:
    """Assemble and mine a block; returns None if ``cancel`` fires first."""
    block, post = _template(view, pending, cfg, timestamp, verified)
    start = default_entropy(entropy).randbelow(1 << 63)
    if block.difficulty == 1:
        if stats is not None:
            stats["trials"] = 1
        return replace(block, nonce=start), post
    prefix = block.seal_prefix() + encode_fields([b""])
    target = pow_target(block.difficulty)
    trials = 0
    nonce = start
    while True:
        if cancel is not None and cancel.is_set():
            return None
        found = search_nonce(prefix, nonce, POW_CHUNK, target)
        if found is not None:
            trials += (found - nonce) % (1 << 64) + 1
            if stats is not None:
                stats["trials"] = trials
            return replace(block, nonce=found), post
        trials += POW_CHUNK
        nonce = (nonce + POW_CHUNK) % (1 << 64)


def produce_block_poa(
    view: ChainView,
    pending: Iterable[Transaction],
    cfg: ConsensusConfig,
    signer: Sm2KeyPair,
    entropy: Entropy | None = None,
    *,
    timestamp: int = 0,
    verified: set | None = None,
) -> tuple[Block, WorldState]:
    """Assemble a block and seal it with ``signer``.

    The caller is responsible for only producing in its own slot; a block
    sealed out of turn is rejected by :func:`verify_block`.
    """
    block, post = _template(view, pending, cfg, timestamp, verified)
    block = replace(block, validator=derive_address(signer.public_key),
                    validator_key=signer.public_key.to_bytes())
    sig = sm2_sign(signer.private_key, DEFAULT_ID, block.seal_prefix(), entropy,
                   public_key=signer.public_key)
    return replace(block, seal=sig.to_bytes()), post


def check_seal(block: Block, cfg: ConsensusConfig) -> bool:
    if cfg.mode is ConsensusMode.POW:
        return block.difficulty == cfg.difficulty and meets_difficulty(block.block_hash, block.difficulty)
    if block.validator != cfg.slot_validator(block.height):
        return False
    try:
        key = CurvePoint.from_bytes(block.validator_key)
        sig = Sm2Signature.from_bytes(block.seal)
    except ValueError:
        return False
    if derive_address(key) != block.validator:
        return False
    return sm2_verify(key, DEFAULT_ID, block.seal_prefix(), sig)


def verify_block(
    block: Block,
    parent: Block,
    parent_state: WorldState,
    cfg: ConsensusConfig,
    verified: set | None = None,
) -> bool:
    return execute_block(block, parent, parent_state, cfg, verified) is not None


def execute_block(block, parent, parent_state, cfg, verified=None):
    """Verify ``block`` and return ``(post_state, receipts)``, or None if invalid."""
    if block.parent_hash != parent.block_hash or block.height != parent.height + 1:
        return None
    if not check_seal(block, cfg):
        return None
    if block.tx_root != tx_root(block.txs):
        return None
    try:
        post, receipts = apply_transactions(parent_state, block.txs, cfg, verified)
    except InvalidBlock:
        return None
    if post.root != block.state_root:
        return None
    return post, receipts


def select_chain(tips: Sequence[Block]) -> Block:
    """Highest block wins; equal heights go to the smaller block hash."""
    if not tips:
        raise ValueError("no candidate tips")
    return min(tips, key=lambda b: (-b.height, b.block_hash))


# --- chain store ---------------------------------------------------------------

class Chain:
    """A verified linear chain with per-block post-states."""

    def __init__(self, genesis: Block, genesis_state: WorldState, cfg: ConsensusConfig):
        if genesis.state_root != genesis_state.root:
            raise InvalidBlock("genesis state root mismatch")
        self.cfg = cfg
        self.blocks: list[Block] = [genesis]
        self.states: list[WorldState] = [genesis_state]
        self.receipts: list[list[TxReceipt]] = [[]]
        self.index: dict[bytes, int] = {genesis.block_hash: 0}

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def head_state(self) -> WorldState:
        return self.states[-1]

    @property
    def height(self) -> int:
        return self.head.height

    def view(self) -> ChainView:
        return ChainView(self.head, self.head_state)

    def append(self, block: Block, verified: set | None = None) -> list[TxReceipt]:
        result = execute_block(block, self.head, self.head_state, self.cfg, verified)
        if result is None:
            raise InvalidBlock(f"block {block.height} failed verification")
        self.commit(block, *result)
        return result[1]

    def commit(self, block: Block, post: WorldState, receipts: list[TxReceipt]) -> None:
        """Append an already-verified block (single-writer path)."""
        self.blocks.append(block)
        self.states.append(post)
        self.receipts.append(receipts)
        self.index[block.block_hash] = block.height

    def replace_head(self, block: Block, verified: set | None = None) -> bool:
        """Depth-1 reorg: swap the head for a competing sibling if it wins fork choice."""
        if len(self.blocks) < 2 or block.parent_hash != self.blocks[-2].block_hash:
            return False
        if select_chain([self.head, block]) is not block:
            return False
        result = execute_block(block, self.blocks[-2], self.states[-2], self.cfg, verified)
        if result is None:
            return False
        del self.index[self.head.block_hash]
        self.blocks.pop()
        self.states.pop()
        self.receipts.pop()
        self.commit(block, *result)
        return True

    def export_lines(self) -> list[str]:
        return [b.encode().hex() for b in self.blocks]

    @classmethod
    def import_lines(
        cls, lines: Iterable[str], genesis_state: WorldState, cfg: ConsensusConfig
    ) -> "Chain":
        blocks = [Block.decode(bytes.fromhex(line.strip())) for line in lines if line.strip()]
        if not blocks:
            raise InvalidBlock("empty chain export")
        chain = cls(blocks[0], genesis_state, cfg)
        for b in blocks[1:]:
            chain.append(b)
        return chain

    def find_tx(self, tx_hash: bytes) -> tuple[int, int] | None:
        for height in range(len(self.blocks) - 1, 0, -1):
            for i, tx in enumerate(self.blocks[height].txs):
                if tx.tx_hash == tx_hash:
                    return height, i
        return None


ClockFn = Callable[[], int]
