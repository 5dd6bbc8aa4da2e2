"""Genesis configuration: consensus knobs, node keys, network links, prestate."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from ..crypto import Sm2KeyPair, keypair_from_private, sm3_hash
from ..crypto.sm2 import N
from .chain import Block, ConsensusConfig, ConsensusMode, WorldState, make_genesis
from .contract import ContractState
from .tx import check_address, derive_address

DEFAULT_DIFFICULTY = 1 << 16
DEFAULT_GAS_LIMIT = 0xFFFFFFFF


class GenesisError(ValueError):
    pass


def node_keypair(seed: str, index: int) -> Sm2KeyPair:
    """Deterministic signer key for node ``index``."""
    d = int.from_bytes(sm3_hash(f"{seed}/node/{index}".encode()), "big") % (N - 2) + 1
    return keypair_from_private(d)


@dataclass(frozen=True)
class GenesisConfig:
    consensus: str = "poa"
    difficulty: int = DEFAULT_DIFFICULTY
    gas_limit: int = DEFAULT_GAS_LIMIT
    validators: tuple[bytes, ...] | None = None  # None: every node validates (PoA)
    node_count: int = 3
    block_interval_ms: int = 1000
    node_seed: str = "authros"
    link_latency_ms: float = 1.0
    link_bandwidth: float = 500_000.0  # bytes per second
    alloc: tuple[tuple[bytes, bytes], ...] = field(default=())  # (address, token) prestate registrations
    timestamp: int = 0

    def node_keys(self) -> list[Sm2KeyPair]:
        return [node_keypair(self.node_seed, i) for i in range(self.node_count)]

    def consensus_config(self) -> ConsensusConfig:
        try:
            mode = ConsensusMode(self.consensus)
        except ValueError:
            raise GenesisError(f"unknown consensus mode {self.consensus!r}") from None
        validators = self.validators
        if validators is None:
            validators = tuple(derive_address(k.public_key) for k in self.node_keys()) \
                if mode is ConsensusMode.POA else ()
        try:
            return ConsensusConfig(mode, self.difficulty, self.gas_limit, tuple(validators),
                                   self.block_interval_ms, self.node_count)
        except ValueError as exc:
            raise GenesisError(str(exc)) from None

    def genesis_state(self) -> WorldState:
        registry, lists = {}, {}
        for addr, token in self.alloc:
            if addr in registry or not token:
                raise GenesisError("alloc entries need unique addresses and non-empty tokens")
            registry[addr] = token
            lists[addr] = (token,)
        return WorldState(ContractState(registry=MappingProxyType(registry),
                                        token_lists=MappingProxyType(lists)))

    def genesis_block(self, state: WorldState | None = None) -> Block:
        state = state or self.genesis_state()
        cfg = self.consensus_config()
        return make_genesis(state, cfg.difficulty if cfg.mode is ConsensusMode.POW else 1, self.timestamp)

    # --- file format ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "consensus": self.consensus,
            "difficulty": self.difficulty,
            "gas_limit": hex(self.gas_limit),
            "node_count": self.node_count,
            "block_interval_ms": self.block_interval_ms,
            "node_seed": self.node_seed,
            "link_latency_ms": self.link_latency_ms,
            "link_bandwidth": self.link_bandwidth,
            "timestamp": self.timestamp,
        }
        if self.validators is not None:
            doc["validators"] = ["0x" + v.hex() for v in self.validators]
        if self.alloc:
            doc["alloc"] = [{"address": "0x" + a.hex(), "token": t.hex()} for a, t in self.alloc]
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "GenesisConfig":
        if not isinstance(doc, dict):
            raise GenesisError("genesis must be a JSON object")
        known = {"consensus", "difficulty", "gas_limit", "validators", "node_count",
                 "block_interval_ms", "node_seed", "link_latency_ms", "link_bandwidth",
                 "alloc", "timestamp"}
        unknown = set(doc) - known
        if unknown:
            raise GenesisError(f"unknown genesis keys: {sorted(unknown)}")
        kw = {}
        try:
            if "consensus" in doc:
                kw["consensus"] = str(doc["consensus"]).lower()
            for key in ("difficulty", "gas_limit"):
                if key in doc:
                    v = doc[key]
                    kw[key] = int(v, 0) if isinstance(v, str) else int(v)
            for key in ("node_count", "block_interval_ms", "timestamp"):
                if key in doc:
                    kw[key] = int(doc[key])
            for key in ("link_latency_ms", "link_bandwidth"):
                if key in doc:
                    kw[key] = float(doc[key])
            if "node_seed" in doc:
                kw["node_seed"] = str(doc["node_seed"])
            if "validators" in doc:
                kw["validators"] = tuple(check_address(bytes.fromhex(v.removeprefix("0x")))
                                         for v in doc["validators"])
            if "alloc" in doc:
                kw["alloc"] = tuple((check_address(bytes.fromhex(e["address"].removeprefix("0x"))),
                                     bytes.fromhex(e["token"])) for e in doc["alloc"])
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            raise GenesisError(f"malformed genesis: {exc}") from None
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.node_count < 1:
            raise GenesisError("node_count must be >= 1")
        if self.link_bandwidth <= 0 or self.link_latency_ms < 0:
            raise GenesisError("link parameters must be positive")
        cfg = self.consensus_config()
        if cfg.mode is ConsensusMode.POA:
            held = {derive_address(k.public_key) for k in self.node_keys()}
            missing = [v for v in cfg.validators if v not in held]
            if missing:
                raise GenesisError("every PoA validator must be a node signer")
        self.genesis_state()


def load_genesis(path: str | Path) -> GenesisConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise GenesisError(f"cannot read genesis {path}: {exc}") from None
    return GenesisConfig.from_dict(doc)
