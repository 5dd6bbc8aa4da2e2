"""On-disk state for one simulated deployment and the per-invocation session.

A state directory holds everything a command sequence depends on::

    genesis.json      network parameters
    chain.ndjson      exported chain, one hex block per line (genesis first)
    server.json       server state: system keys, users, grant mailbox, ciphertext cache
    keystores/*.json  one passphrase-protected keystore per registered identity

Every invocation rebuilds the network by replaying ``chain.ndjson``, runs one
command, then writes the chain and server state back.
"""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass
from pathlib import Path

from ..crypto import SeededEntropy, SystemEntropy, sm3_hash
from ..crypto.entropy import Entropy
from ..ledger import Chain, GenesisConfig, GenesisError, InvalidBlock, Network, load_genesis
from ..protocol import AuthServer, ConfigError

GENESIS = "genesis.json"
CHAIN = "chain.ndjson"
SERVER = "server.json"
KEYSTORES = "keystores"
# fixed epoch for seeded runs, so key rotation never depends on when the command ran
SEEDED_EPOCH_MS = 1_700_000_000_000


def wall_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class StateDir:
    root: Path

    @property
    def genesis_path(self) -> Path:
        return self.root / GENESIS

    @property
    def chain_path(self) -> Path:
        return self.root / CHAIN

    @property
    def server_path(self) -> Path:
        return self.root / SERVER

    def keystore_path(self, name: str) -> Path:
        if not name or "/" in name or name.startswith("."):
            raise ConfigError(f"unusable identity name {name!r}")
        return self.root / KEYSTORES / f"{name}.json"

    def exists(self) -> bool:
        return self.genesis_path.exists()

    def genesis(self) -> GenesisConfig:
        if not self.exists():
            raise ConfigError(f"no network in {self.root}; run init-net first")
        try:
            return load_genesis(self.genesis_path)
        except GenesisError as exc:
            raise ConfigError(str(exc)) from None

    def chain_lines(self) -> list[str]:
        return self.chain_path.read_text().split()

    def server_doc(self) -> dict:
        return json.loads(self.server_path.read_text())

    def fingerprint(self) -> bytes:
        """Digest of the chain and server state: distinct states never share an entropy stream."""
        parts = [p.read_bytes() for p in (self.chain_path, self.server_path) if p.exists()]
        return sm3_hash(b"\x00".join(parts))


def session_entropy(seed: int | None, state: StateDir, argv: list[str]) -> Entropy:
    if seed is None:
        return SystemEntropy()
    material = json.dumps([seed, argv]).encode() + state.fingerprint()
    return SeededEntropy(sm3_hash(material).hex())


class Session:
    """One command's view of the deployment: a running network plus the server."""

    def __init__(self, state: StateDir, entropy: Entropy, seeded: bool):
        self.state = state
        self.entropy = entropy
        genesis = state.genesis()
        try:
            chain = Chain.import_lines(state.chain_lines(), genesis.genesis_state(), genesis.consensus_config())
        except (OSError, ValueError, InvalidBlock) as exc:
            raise ConfigError(f"cannot replay {state.chain_path}: {exc}") from None
        if seeded:
            ticks = itertools.count(chain.head.timestamp + 1)
            net_clock, server_clock = (lambda: next(ticks)), (lambda: SEEDED_EPOCH_MS)
        else:
            net_clock = server_clock = wall_ms
        self.network = Network(genesis, clock=net_clock, entropy=entropy, chain=chain)
        self.server = AuthServer.from_dict(state.server_doc(), self.network, entropy=entropy, clock=server_clock)
        self.clock = server_clock

    def __enter__(self) -> "Session":
        self.network.start()
        return self

    def __exit__(self, *exc) -> None:
        self.network.stop()
        self.save()

    def save(self) -> None:
        via = self.server.config.via
        self.state.chain_path.write_text("\n".join(self.network.export_chain(
            self.network.default_node() if via is None else via)) + "\n")
        self.state.server_path.write_text(json.dumps(self.server.to_dict(), indent=1) + "\n")


def initialize(state: StateDir, genesis: GenesisConfig, entropy: Entropy, seeded: bool) -> None:
    """Write a fresh deployment: genesis, a genesis-only chain and an empty server."""
    try:
        genesis.validate()
    except GenesisError as exc:
        raise ConfigError(str(exc)) from None
    state.root.mkdir(parents=True, exist_ok=True)
    state.genesis_path.write_text(genesis.to_json())
    net = Network(genesis, entropy=entropy)
    state.chain_path.write_text("\n".join(net.export_chain()) + "\n")
    server = AuthServer(net, entropy=entropy, clock=(lambda: SEEDED_EPOCH_MS) if seeded else wall_ms)
    state.server_path.write_text(json.dumps(server.to_dict(), indent=1) + "\n")
