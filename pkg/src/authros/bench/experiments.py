"""Ledger experiments: concurrency sweep and message-size scaling.

Both experiments run a fresh in-process network, pre-sign every transaction
before the clock starts, and submit in an order fixed by the seed.  Latency is
measured from ``submit`` to inclusion at the node the transaction entered.
"""
from __future__ import annotations

import random
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..crypto import SeededEntropy, sm2_keygen, sm3_hash
from ..ledger import DataUpload, GenesisConfig, Network, ReceiptStatus, derive_address, sign_transaction
from ..ledger.network import PendingReceipt

KB = 1024
PAPER_DIFFICULTY = 0x4CCCC8
DEFAULT_SIZES = (1 * KB, 2 * KB, 4 * KB, 8 * KB)


@dataclass(frozen=True)
class ExperimentConfig:
    consensus: str = "poa"
    concurrency: int = 300
    message_size: int = 1 * KB
    repetitions: int = 300
    difficulty: int = 1 << 16
    seed: int = 2024
    block_interval_ms: int = 5000
    node_count: int = 3
    link_latency_ms: float = 1.0
    link_bandwidth: float = 125_000.0  # bytes/s, a 1 Mbit/s robot uplink

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.concurrency < 0 or self.message_size < 0:
            raise ValueError("concurrency and message size must be non-negative")
        if self.consensus not in ("pow", "poa"):
            raise ValueError("consensus must be pow or poa")
        if self.node_count < 2:
            raise ValueError("experiments need a bootstrap node and at least one account node")

    @property
    def timeout_s(self) -> float:
        return 10 * self.block_interval_ms / 1000.0

    def genesis(self, alloc=()) -> GenesisConfig:
        return GenesisConfig(
            consensus=self.consensus, difficulty=self.difficulty, node_count=self.node_count,
            block_interval_ms=self.block_interval_ms, node_seed=f"bench-{self.seed}",
            link_latency_ms=self.link_latency_ms, link_bandwidth=self.link_bandwidth, alloc=tuple(alloc),
        )

    def describe(self) -> dict:
        d = asdict(self)
        d["timeout_s"] = self.timeout_s
        d["paper_difficulty"] = PAPER_DIFFICULTY
        return d


@dataclass
class RunResult:
    total_time_ms: float
    success_count: int
    failure_count: int
    latencies_ms: list[float] = field(default_factory=list)
    successes: list[bool] = field(default_factory=list)
    submission_order: list[bytes] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        n = self.success_count + self.failure_count
        return 1.0 if n == 0 else self.success_count / n


@dataclass
class SizeStats:
    size: int
    latencies_ms: list[float]
    successes: list[bool]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.latencies_ms)

    @property
    def median(self) -> float:
        return statistics.median(self.latencies_ms)

    @property
    def stddev(self) -> float:
        return statistics.pstdev(self.latencies_ms)


@dataclass
class MessageSizeResult:
    consensus: str
    per_size: dict[int, SizeStats]
    submission_order: list[bytes] = field(default_factory=list)

    @property
    def means(self) -> list[float]:
        return [self.per_size[s].mean for s in sorted(self.per_size)]

    @property
    def slope_ms_per_kb(self) -> float:
        return least_squares_slope([s / KB for s in sorted(self.per_size)], self.means)


def least_squares_slope(xs, ys) -> float:
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])


# --- schedules ------------------------------------------------------------------

def account_nodes(node_count: int) -> list[int]:
    return list(range(1, node_count))


def concurrency_schedule(seed: int, n: int, node_count: int = 3) -> list[tuple[int, int]]:
    """Submission order as ``(submitter, entry node)`` pairs; a pure function of the seed."""
    rng = random.Random(f"concurrency/{seed}/{n}")
    order = list(range(n))
    rng.shuffle(order)
    nodes = account_nodes(node_count)
    return [(s, nodes[i % len(nodes)]) for i, s in enumerate(order)]


def message_size_schedule(seed: int, sizes, rounds: int, node_count: int = 3) -> list[tuple[int, list[int]]]:
    """Per round: the entry node and the order the sizes are submitted in."""
    rng = random.Random(f"msgsize/{seed}/{rounds}")
    nodes = account_nodes(node_count)
    out = []
    for r in range(rounds):
        order = list(sizes)
        rng.shuffle(order)
        out.append((nodes[r % len(nodes)], order))
    return out


# --- helpers ----------------------------------------------------------------------

def _accounts(seed: int, n: int, label: str):
    ent = SeededEntropy(f"{label}/{seed}")
    keys = [sm2_keygen(ent) for _ in range(n)]
    tokens = [sm3_hash(f"{label}/{seed}/{i}".encode()) for i in range(n)]
    alloc = [(derive_address(k.public_key), t) for k, t in zip(keys, tokens)]
    return keys, tokens, alloc, ent


def _upload(key, token, nonce, size, ent, stamp):
    call = DataUpload(ent.token_bytes(size), token, str(stamp).encode())
    return sign_transaction(key, nonce, call, submitted_at=stamp, entropy=ent)


def _wait_all(receipts: list[PendingReceipt], deadline: float) -> None:
    for r in receipts:
        r.wait(max(0.0, deadline - time.perf_counter()))


def _settle(net: Network, via: int, timeout: float) -> None:
    # start the next round from a converged network, so a round never pays for the last one's propagation
    height = net.nodes[via].chain.height
    for i in range(len(net.nodes)):
        net.wait_for_height(height, timeout, via=i)


# --- experiments --------------------------------------------------------------------

def run_concurrency_experiment(cfg: ExperimentConfig) -> RunResult:
    """``cfg.concurrency`` submitters each send one Data_upload concurrently."""
    n = cfg.concurrency
    if n == 0:
        return RunResult(0.0, 0, 0)
    keys, tokens, alloc, ent = _accounts(cfg.seed, n, "submitter")
    schedule = concurrency_schedule(cfg.seed, n, cfg.node_count)
    txs = {s: _upload(keys[s], tokens[s], 0, cfg.message_size, ent, i) for i, (s, _) in enumerate(schedule)}

    receipts: list[PendingReceipt | None] = [None] * n
    turn = threading.Condition()
    next_slot = [0]
    start = threading.Event()

    with Network(cfg.genesis(alloc), entropy=SeededEntropy(cfg.seed)) as net:
        def submitter(slot: int, who: int, via: int) -> None:
            start.wait()
            with turn:
                # submissions happen in schedule order; waiting for inclusion is concurrent
                while next_slot[0] != slot:
                    turn.wait()
                receipts[slot] = net.submit(txs[who], via)
                next_slot[0] += 1
                turn.notify_all()
            receipts[slot].wait(cfg.timeout_s)

        threads = [threading.Thread(target=submitter, args=(i, s, v), daemon=True)
                   for i, (s, v) in enumerate(schedule)]
        for t in threads:
            t.start()
        start.set()
        for t in threads:
            t.join()
        ends = [r.resolved_at for r in receipts if r.status is ReceiptStatus.INCLUDED]

    lat, ok = [], []
    for r in receipts:
        good = r.status is ReceiptStatus.INCLUDED and r.latency_ms <= cfg.timeout_s * 1000
        ok.append(good)
        lat.append(r.latency_ms if r.latency_ms is not None else cfg.timeout_s * 1000)
    first = min(r.submitted_at for r in receipts)
    last = max(ends) if len(ends) == n else first + cfg.timeout_s
    return RunResult(
        total_time_ms=(last - first) * 1000.0,
        success_count=sum(ok),
        failure_count=n - sum(ok),
        latencies_ms=lat,
        successes=ok,
        submission_order=[r.tx_hash for r in receipts],
    )


def run_message_size_experiment(
    cfg: ExperimentConfig, sizes=DEFAULT_SIZES, calls: int = 300
) -> MessageSizeResult:
    """``calls`` rounds; each round submits one upload of every size through one entry node.

    Blocking by round means every size sees the same chain conditions, so the
    comparison between sizes is not swamped by block-time variance.
    """
    sizes = tuple(sorted(sizes))
    nodes = account_nodes(cfg.node_count)
    # one account per (size, entry node): an account always enters through the same node,
    # so its nonces never race ahead of what that node has seen
    slots = [(s, v) for s in sizes for v in nodes]
    keys, tokens, alloc, ent = _accounts(cfg.seed, len(slots), "sizer")
    key_of = dict(zip(slots, keys))
    token_of = dict(zip(slots, tokens))
    nonce = {slot: 0 for slot in slots}
    schedule = message_size_schedule(cfg.seed, sizes, calls, cfg.node_count)
    rounds = []
    for r, (via, order) in enumerate(schedule):
        txs = []
        for s in order:
            txs.append(_upload(key_of[s, via], token_of[s, via], nonce[s, via], s, ent, r))
            nonce[s, via] += 1
        rounds.append(txs)

    lat = {s: [] for s in sizes}
    ok = {s: [] for s in sizes}
    order_log = []
    with Network(cfg.genesis(alloc), entropy=SeededEntropy(cfg.seed)) as net:
        for (via, order), txs in zip(schedule, rounds):
            receipts = [net.submit(tx, via) for tx in txs]
            order_log.extend(tx.tx_hash for tx in txs)
            _wait_all(receipts, time.perf_counter() + cfg.timeout_s)
            _settle(net, via, cfg.timeout_s)
            for s, r in zip(order, receipts):
                good = r.status is ReceiptStatus.INCLUDED
                ok[s].append(good)
                lat[s].append(r.latency_ms if good else cfg.timeout_s * 1000)
    return MessageSizeResult(cfg.consensus, {s: SizeStats(s, lat[s], ok[s]) for s in sizes}, order_log)
