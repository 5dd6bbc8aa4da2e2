"""In-process multi-node network: mempools, gossip links, producers, receipts.

Topology follows the usual desk setup: node 0 is the bootstrap node and the
PoW miner; the remaining nodes are account nodes that clients attach to.
Under PoA every node listed as a validator seals blocks in its round-robin
slot.  Messages between nodes are delivered by a scheduler thread after
``latency + size / bandwidth``; each node applies blocks on its own worker
thread, so commits are single-writer per node.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import queue
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from ..crypto.entropy import Entropy, SeededEntropy
from .chain import (
    Block,
    Chain,
    ConsensusMode,
    InvalidBlock,
    TxReceipt,
    WorldState,
    execute_block,
    produce_block_poa,
    produce_block_pow,
)
from .contract import contract_data_query
from .genesis import GenesisConfig
from .tx import Transaction, derive_address, intrinsic_gas

log = logging.getLogger(__name__)


class ReceiptStatus(str, Enum):
    PENDING = "pending"
    INCLUDED = "included"
    REJECTED = "rejected"
    TIMED_OUT = "timed_out"


class PendingReceipt:
    """Handle for a submitted tx; resolves to included, rejected or timed out."""

    def __init__(self, tx: Transaction):
        self.tx = tx
        self.tx_hash = tx.tx_hash
        self.status = ReceiptStatus.PENDING
        self.reason = ""
        self.block_hash: bytes | None = None
        self.height: int | None = None
        self.index: int | None = None
        self.success: bool | None = None
        self.submitted_at: float | None = None  # perf_counter seconds
        self.resolved_at: float | None = None
        self._done = threading.Event()

    @property
    def latency_ms(self) -> float | None:
        if self.submitted_at is None or self.resolved_at is None:
            return None
        return (self.resolved_at - self.submitted_at) * 1000.0

    def _include(self, block: Block, index: int, receipt: TxReceipt) -> None:
        if self._done.is_set():
            return
        self.status = ReceiptStatus.INCLUDED
        self.block_hash = block.block_hash
        self.height = block.height
        self.index = index
        self.success = receipt.success
        self.reason = receipt.reason
        self.resolved_at = time.perf_counter()
        self._done.set()

    def _reject(self, reason: str) -> None:
        self.status = ReceiptStatus.REJECTED
        self.reason = reason
        self.resolved_at = time.perf_counter()
        self._done.set()

    def wait(self, timeout: float | None = None) -> "PendingReceipt":
        if not self._done.wait(timeout) and self.status is ReceiptStatus.PENDING:
            self.status = ReceiptStatus.TIMED_OUT
        return self

    @property
    def included(self) -> bool:
        return self.status is ReceiptStatus.INCLUDED

    def __repr__(self):
        return f"<PendingReceipt {self.tx_hash.hex()[:12]} {self.status.value} h={self.height}>"


class Rejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class LinkModel:
    latency_ms: float = 1.0
    bandwidth: float = 500_000.0

    def delay(self, nbytes: int) -> float:
        return self.latency_ms / 1000.0 + nbytes / self.bandwidth


class _Scheduler:
    """Delivers callbacks at their due time on one thread."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self._cv = threading.Condition()
        self._stop = False
        self._thread = threading.Thread(target=self._run, name="link-scheduler", daemon=True)
        self._thread.start()

    def after(self, delay: float, fn: Callable[[], None]) -> None:
        with self._cv:
            heapq.heappush(self._heap, (time.monotonic() + delay, next(self._seq), fn))
            self._cv.notify()

    def _run(self):
        while True:
            with self._cv:
                while not self._stop and (not self._heap or self._heap[0][0] > time.monotonic()):
                    timeout = self._heap[0][0] - time.monotonic() if self._heap else None
                    self._cv.wait(timeout)
                if self._stop:
                    return
                _, _, fn = heapq.heappop(self._heap)
            try:
                fn()
            except Exception:  # pragma: no cover - delivery must never kill the link
                log.exception("delivery failed")

    def stop(self):
        with self._cv:
            self._stop = True
            self._cv.notify()
        self._thread.join()


class Node:
    def __init__(self, index: int, network: "Network", signer):
        self.index = index
        self.network = network
        self.signer = signer
        self.address = derive_address(signer.public_key)
        g = network.genesis
        self.chain = Chain(network.genesis_block, network.genesis_state, network.cfg)
        self.pool: OrderedDict[bytes, Transaction] = OrderedDict()
        # signature checks are pure functions of the tx bytes, so co-hosted nodes share one memo
        self.verified: set[bytes] = network.verified
        self.lock = threading.RLock()
        self.changed = threading.Condition(self.lock)
        self.watchers: dict[bytes, list[PendingReceipt]] = {}
        self.orphans: dict[bytes, list[Block]] = {}
        self.inbox: queue.Queue = queue.Queue()
        self.blocks_produced = 0
        self.pow_trials: list[int] = []
        del g

    # --- admission -------------------------------------------------------

    def admit(self, tx: Transaction) -> None:
        """Full admission check for a client submission; raises :class:`Rejected`."""
        cfg = self.network.cfg
        if tx.gas_limit > cfg.block_gas_limit or tx.gas_limit < intrinsic_gas(tx.call):
            raise Rejected("gas")
        h = tx.tx_hash
        if h not in self.verified:
            if not tx.signature_valid():
                raise Rejected("signature")
        with self.lock:
            self.verified.add(h)
            if tx.nonce != self._next_nonce(tx.sender):
                raise Rejected("nonce")
            self.pool[h] = tx
            self.changed.notify_all()

    def _next_nonce(self, sender: bytes) -> int:
        n = self.chain.head_state.next_nonce(sender)
        for tx in self.pool.values():
            if tx.sender == sender and tx.nonce >= n:
                n = max(n, tx.nonce + 1)
        return n

    def receive_tx(self, tx: Transaction) -> None:
        # gossip arrival: signatures are checked lazily when the tx is sealed or imported
        with self.lock:
            if tx.nonce < self.chain.head_state.next_nonce(tx.sender):
                return
            self.pool.setdefault(tx.tx_hash, tx)
            self.changed.notify_all()

    # --- blocks ------------------------------------------------------------

    def receive_block(self, block: Block) -> None:
        self.inbox.put(block)

    def _import(self, block: Block) -> None:
        with self.lock:
            if block.block_hash in self.chain.index:
                return
            head = self.chain.head
            if block.parent_hash == head.block_hash:
                result = execute_block(block, head, self.chain.head_state, self.chain.cfg, self.verified)
                if result is None:
                    log.warning("node %d rejected block %d", self.index, block.height)
                    return
                self._commit(block, *result)
            elif block.height == head.height and len(self.chain.blocks) > 1 \
                    and block.parent_hash == self.chain.blocks[-2].block_hash:
                if self.chain.replace_head(block, self.verified):
                    self._after_commit(block, self.chain.receipts[-1])
                return
            elif block.height > head.height:
                self.orphans.setdefault(block.parent_hash, []).append(block)
                return
            else:
                return
            children = self.orphans.pop(block.block_hash, [])
        for child in children:
            self._import(child)

    def _commit(self, block: Block, post: WorldState, receipts: list[TxReceipt]) -> None:
        self.chain.commit(block, post, receipts)
        self._after_commit(block, receipts)

    def _after_commit(self, block: Block, receipts: list[TxReceipt]) -> None:
        for i, (tx, rc) in enumerate(zip(block.txs, receipts)):
            self.pool.pop(tx.tx_hash, None)
            for w in self.watchers.pop(tx.tx_hash, ()):
                w._include(block, i, rc)
        state = self.chain.head_state
        stale = [h for h, tx in self.pool.items() if tx.nonce < state.next_nonce(tx.sender)]
        for h in stale:
            del self.pool[h]
        self.changed.notify_all()

    def watch(self, receipt: PendingReceipt) -> None:
        with self.lock:
            found = self.chain.find_tx(receipt.tx_hash)
            if found is not None:
                height, i = found
                receipt._include(self.chain.blocks[height], i, self.chain.receipts[height][i])
                return
            self.watchers.setdefault(receipt.tx_hash, []).append(receipt)

    # --- threads -------------------------------------------------------------

    def worker(self, stop: threading.Event) -> None:
        while not stop.is_set():
            try:
                block = self.inbox.get(timeout=0.05)
            except queue.Empty:
                continue
            try:
                self._import(block)
            except InvalidBlock:
                log.warning("node %d: invalid block", self.index)

    def _my_slot(self) -> bool:
        cfg = self.network.cfg
        return cfg.slot_validator(self.chain.height + 1) == self.address

    def producer(self, stop: threading.Event) -> None:
        cfg = self.network.cfg
        pow_mode = cfg.mode is ConsensusMode.POW
        while not stop.is_set():
            with self.lock:
                while not stop.is_set() and not (self.pool and (pow_mode or self._my_slot())):
                    self.changed.wait(0.05)
                if stop.is_set():
                    return
                view = self.chain.view()
                pending = list(self.pool.values())
            ts = self.network.clock()
            if pow_mode:
                stats: dict = {}
                produced = produce_block_pow(view, pending, cfg, self.network.entropy, timestamp=ts,
                                             cancel=stop, verified=self.verified, stats=stats)
                if produced is None:
                    return
                self.pow_trials.append(stats["trials"])
            else:
                produced = produce_block_poa(view, pending, cfg, self.signer, self.network.entropy,
                                             timestamp=ts, verified=self.verified)
            block, post = produced
            with self.lock:
                if self.chain.head.block_hash != view.head.block_hash:
                    continue
                receipts = execute_block(block, view.head, view.state, cfg, self.verified)
                if receipts is None:  # pragma: no cover - producer bug guard
                    log.error("node %d produced an invalid block", self.index)
                    continue
                self._commit(block, *receipts)
                self.blocks_produced += 1
            if not block.txs:
                # everything pending was unusable; drop it so we do not spin
                with self.lock:
                    for tx in pending:
                        self.pool.pop(tx.tx_hash, None)
            self.network.broadcast(self, block)


class Network:
    """A running simulated chain of ``genesis.node_count`` nodes."""

    def __init__(
        self,
        genesis: GenesisConfig,
        *,
        clock: Callable[[], int] | None = None,
        entropy: Entropy | None = None,
        chain: Chain | None = None,
    ):
        genesis.validate()
        self.genesis = genesis
        self.cfg = genesis.consensus_config()
        self.genesis_state = genesis.genesis_state()
        self.genesis_block = genesis.genesis_block(self.genesis_state)
        self.link = LinkModel(genesis.link_latency_ms, genesis.link_bandwidth)
        self.verified: set[bytes] = set()
        self.entropy = entropy or SeededEntropy(genesis.node_seed)
        self._t0 = time.monotonic()
        self.clock = clock or (lambda: int((time.monotonic() - self._t0) * 1000))
        self.nodes = [Node(i, self, k) for i, k in enumerate(genesis.node_keys())]
        if chain is not None:
            for node in self.nodes:
                for b, s, r in zip(chain.blocks[1:], chain.states[1:], chain.receipts[1:]):
                    node.chain.commit(b, s, r)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._scheduler: _Scheduler | None = None

    # --- lifecycle ---------------------------------------------------------

    def start(self) -> "Network":
        if self._threads:
            return self
        self._stop.clear()
        self._scheduler = _Scheduler()
        for node in self.nodes:
            self._spawn(node.worker, f"node{node.index}-worker")
            if self._is_producer(node):
                self._spawn(node.producer, f"node{node.index}-producer")
        return self

    def _spawn(self, fn, name):
        t = threading.Thread(target=fn, args=(self._stop,), name=name, daemon=True)
        t.start()
        self._threads.append(t)

    def _is_producer(self, node: Node) -> bool:
        if self.cfg.mode is ConsensusMode.POW:
            return node.index == 0
        return node.address in self.cfg.validators

    def stop(self) -> None:
        self._stop.set()
        for node in self.nodes:
            with node.lock:
                node.changed.notify_all()
        for t in self._threads:
            t.join()
        self._threads.clear()
        if self._scheduler is not None:
            self._scheduler.stop()
            self._scheduler = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # --- client surface -------------------------------------------------------

    @property
    def miner(self) -> Node:
        return self.nodes[0]

    def default_node(self) -> int:
        return 1 if len(self.nodes) > 1 else 0

    def submit(self, tx: Transaction, via: int | None = None) -> PendingReceipt:
        """Submit through node ``via``; the receipt resolves when that node commits it."""
        node = self.nodes[self.default_node() if via is None else via]
        receipt = PendingReceipt(tx)
        receipt.submitted_at = time.perf_counter()
        try:
            node.admit(tx)
        except Rejected as exc:
            receipt._reject(exc.reason)
            return receipt
        node.watch(receipt)
        self._gossip_tx(node, tx)
        return receipt

    def _gossip_tx(self, origin: Node, tx: Transaction) -> None:
        delay = self.link.delay(tx.size)
        for peer in self.nodes:
            if peer is not origin:
                self._deliver(delay, lambda p=peer: p.receive_tx(tx))

    def broadcast(self, origin: Node, block: Block) -> None:
        delay = self.link.delay(block.size)
        for peer in self.nodes:
            if peer is not origin:
                self._deliver(delay, lambda p=peer: p.receive_block(block))

    def _deliver(self, delay: float, fn) -> None:
        if self._scheduler is None:
            fn()
        else:
            self._scheduler.after(delay, fn)

    def next_nonce(self, sender: bytes, via: int | None = None) -> int:
        node = self.nodes[self.default_node() if via is None else via]
        with node.lock:
            return node._next_nonce(sender)

    def head_state(self, via: int | None = None) -> WorldState:
        node = self.nodes[self.default_node() if via is None else via]
        with node.lock:
            return node.chain.head_state

    def query(self, caller: bytes, token: bytes, target: bytes, via: int | None = None):
        """Read-only ``data_query`` against a committed snapshot."""
        return contract_data_query(self.head_state(via).contract, caller, token, target)

    def wait_for_height(self, height: int, timeout: float = 30.0, via: int | None = None) -> bool:
        node = self.nodes[self.default_node() if via is None else via]
        deadline = time.monotonic() + timeout
        with node.lock:
            while node.chain.height < height:
                left = deadline - time.monotonic()
                if left <= 0:
                    return False
                node.changed.wait(min(left, 0.05))
        return True

    def export_chain(self, via: int = 0) -> list[str]:
        node = self.nodes[via]
        with node.lock:
            return node.chain.export_lines()
