"""``authros`` command line.

Exit codes: 0 success, 1 ledger failure, 2 configuration, 3 identity,
4 authorization, 5 integrity.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

from ..crypto import sm3_hash
from ..ledger import GenesisConfig, GenesisError, load_genesis
from ..protocol import (
    CacheMiss,
    Client,
    ConfigError,
    DuplicateName,
    ProtocolError,
    decrypt_shared,
    monitor_and_share,
    onchain_token,
)
from ..protocol.pipeline import ShareFailure
from ..rosbus import ImageMsg, Master, MessageType, ReplayFormatError, Role, inject, monitor, read_replay
from .keystore import Keystore
from .state import Session, StateDir, initialize, session_entropy, wall_ms

log = logging.getLogger("authros")

SEED_ENV = "AUTHROS_SIM_SEED"
PASSPHRASE_ENV = "AUTHROS_PASSPHRASE"
EXPERIMENTS = ("concurrency", "msgsize", "sm4", "sm3")
TYPE_NAMES = {"odometry": MessageType.ODOMETRY, "image": MessageType.COMPRESSED_IMAGE,
              "generic": MessageType.GENERIC}


# --- argument helpers ------------------------------------------------------------

def parse_size(text: str) -> int:
    """``800k``, ``8KB``, ``1m`` or a plain byte count."""
    m = re.fullmatch(r"\s*(\d+)\s*([kKmM]?)[bB]?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return int(m.group(1)) * {"": 1, "k": 1024, "m": 1024 * 1024}[m.group(2).lower()]


def parse_int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer {text!r}") from None


def parse_hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text.removeprefix("0x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad hex {text!r}") from None


def effective_seed(args) -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env, 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    return args.seed


def passphrase(args) -> str:
    value = args.passphrase if args.passphrase is not None else os.environ.get(PASSPHRASE_ENV)
    if not value:
        raise ConfigError(f"a keystore passphrase is required (--passphrase or {PASSPHRASE_ENV})")
    return value


class Context:
    def __init__(self, args, argv: list[str]):
        self.args = args
        self.state = StateDir(Path(args.state))
        self.seed = effective_seed(args)
        # where the state lives and how the seed was supplied must not change the randomness
        skip = {"state", "seed", "passphrase", "verbose", "func"}
        self.argv = [argv[0] if argv else ""] + [f"{k}={v}" for k, v in sorted(vars(args).items())
                                                 if k not in skip]

    def entropy(self):
        return session_entropy(self.seed, self.state, self.argv)

    def session(self) -> Session:
        return Session(self.state, self.entropy(), self.seed is not None)

    def load_client(self, session: Session, name: str) -> Keystore:
        path = self.state.keystore_path(name)
        return Keystore.load(path, passphrase(self.args), session.entropy)

    def save_client(self, session: Session, ks: Keystore) -> Path:
        return ks.save(self.state.keystore_path(ks.client.name), passphrase(self.args), session.entropy)


# --- commands ----------------------------------------------------------------------

def cmd_init_net(ctx: Context) -> int:
    a = ctx.args
    if ctx.state.exists() and not a.force:
        raise ConfigError(f"{ctx.state.root} already holds a network (use --force to replace it)")
    try:
        genesis = load_genesis(a.genesis) if a.genesis else GenesisConfig()
        overrides = {k: v for k, v in (("consensus", a.consensus), ("difficulty", a.difficulty),
                                       ("node_count", a.nodes)) if v is not None}
        genesis = replace(genesis, **overrides)
        genesis.validate()
    except (GenesisError, TypeError) as exc:
        raise ConfigError(f"invalid genesis: {exc}") from None
    for path in ctx.state.root.glob("keystores/*.json") if a.force else ():
        path.unlink()
    initialize(ctx.state, genesis, ctx.entropy(), ctx.seed is not None)
    with ctx.session() as s:
        cfg = s.network.cfg
        print(f"network {genesis.consensus} nodes={len(s.network.nodes)} miner=node0")
        print(f"genesis 0x{s.network.genesis_block.block_hash.hex()}")
        if genesis.consensus == "pow":
            print(f"difficulty {cfg.difficulty}")
        else:
            for v in cfg.validators:
                print(f"validator 0x{v.hex()}")
        print(f"state {ctx.state.root}")
    return 0


def cmd_register(ctx: Context) -> int:
    a = ctx.args
    path = ctx.state.keystore_path(a.name)
    passphrase(a)
    with ctx.session() as s:
        if path.exists():
            raise DuplicateName(f"a keystore for {a.name!r} already exists")
        token = a.token.encode() if a.token else s.entropy.token_bytes(16).hex().encode()
        client = Client.create(a.name, token, s.entropy)
        ident = client.register(s.server)
        ks = Keystore(client)
        written = ctx.save_client(s, ks)
    print(f"name {a.name}")
    print(f"address 0x{ident.addr.hex()}")
    print(f"token-commitment {onchain_token(ident.sigma).hex()}")
    print(f"keystore {written}")
    return 0


def cmd_monitor(ctx: Context) -> int:
    a = ctx.args
    kind = TYPE_NAMES[a.type]
    records = []
    if a.replay:
        try:
            records = [r for r in read_replay(a.replay) if r.topic == a.topic]
        except (OSError, ReplayFormatError) as exc:
            raise ConfigError(f"cannot read replay {a.replay}: {exc}") from None
    with ctx.session() as s:
        ks = ctx.load_client(s, a.name)
        master = Master(clock=s.clock if ctx.seed is not None else wall_ms)
        stream = monitor(master, a.topic, kind, node_id=f"monitor-{a.name}")
        inject(master, records)
        if a.image:
            try:
                payload = Path(a.image).read_bytes()
            except OSError as exc:
                raise ConfigError(f"cannot read {a.image}: {exc.strerror}") from None
            pub = master.register(f"camera-{a.name}", a.topic, Role.PUBLISHER)
            master.publish(pub, ImageMsg(payload), kind)
        results = monitor_and_share(ks.client, s.server, stream)
        ctx.save_client(s, ks)
    shared = 0
    for r in results:
        if isinstance(r, ShareFailure):
            print(f"error {r.error}", file=sys.stderr)
        else:
            shared += 1
            print(f"receipt {r.digest.hex()} {r.height}")
    print(f"shared {shared} of {len(results)}")
    return 0


def cmd_grant(ctx: Context) -> int:
    a = ctx.args
    with ctx.session() as s:
        ks = ctx.load_client(s, a.granter)
        res = ks.client.grant(s.server, a.grantee)
    print(f"granted {res.granter} -> {res.grantee} height {res.height}")
    return 0


def cmd_query(ctx: Context) -> int:
    a = ctx.args
    with ctx.session() as s:
        ks = ctx.load_client(s, a.requester)
        ks.client.sync_grants(s.server)
        ctx.save_client(s, ks)
        ct1 = ks.client.query(s.server, a.target, a.digest)
        if ct1 is None:
            print(f"nothing shared by {a.target}")
            return 0
        record = decrypt_shared(ct1, ks.client.key_for(a.target))
    digest = sm3_hash(ct1)
    msg = record.message()
    payload = msg.payload if isinstance(msg, ImageMsg) else (msg if isinstance(msg, bytes) else msg.encode())
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{a.target}-{digest.hex()[:16]}.{record.msg_type.value.lower()}"
    path.write_bytes(payload)
    print(f"digest {digest.hex()}")
    print(f"type {record.msg_type.value}")
    print(f"output {path}")
    return 0


def cmd_tamper(ctx: Context) -> int:
    """Test hook: flip one byte of a cached ciphertext."""
    a = ctx.args
    with ctx.session() as s:
        if a.digest not in s.server.cache:
            raise CacheMiss(f"no cached ciphertext for {a.digest.hex()}")
        s.server.cache.tamper(a.digest, a.position, a.xor)
    print(f"tampered {a.digest.hex()} at byte {a.position}")
    return 0


def cmd_status(ctx: Context) -> int:
    with ctx.session() as s:
        node = s.network.nodes[s.network.default_node()]
        head = node.chain.head
        print(f"consensus {s.network.genesis.consensus}")
        print(f"height {head.height}")
        print(f"head 0x{head.block_hash.hex()}")
        print(f"state-root 0x{node.chain.head_state.root.hex()}")
        print(f"users {','.join(sorted(s.server.users)) or '-'}")
        print(f"cached {len(s.server.cache)}")
    return 0


def cmd_bench(ctx: Context) -> int:
    from ..bench import experiments as ex
    from ..bench import output, timing

    a = ctx.args
    seed = 2024 if ctx.seed is None else ctx.seed
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{a.experiment}.csv"
    base = {"seed": seed}
    if a.difficulty is not None:
        base["difficulty"] = a.difficulty
    if a.interval is not None:
        base["block_interval_ms"] = a.interval
    series: dict[str, list[float]] = {}

    if a.experiment == "concurrency":
        modes = [a.consensus] if a.consensus else ["poa", "pow"]
        rows, summary = [], {}
        for mode in modes:
            cfg = ex.ExperimentConfig(consensus=mode, concurrency=a.n, message_size=a.size or ex.KB, **base)
            r = ex.run_concurrency_experiment(cfg)
            rows += output.concurrency_rows(r, mode, a.n)
            series[f"{mode} n={a.n}"] = r.latencies_ms
            summary[mode] = {"config": cfg.describe(), "total_time_ms": r.total_time_ms,
                             "success_rate": r.success_rate, "success_count": r.success_count,
                             "failure_count": r.failure_count}
            print(f"{mode} n={a.n} total_ms={r.total_time_ms:.1f} success_rate={r.success_rate:.4f}")
    elif a.experiment == "msgsize":
        modes = [a.consensus] if a.consensus else ["poa", "pow"]
        sizes = tuple(a.sizes) if a.sizes else ex.DEFAULT_SIZES
        rows, summary = [], {}
        for mode in modes:
            cfg = ex.ExperimentConfig(consensus=mode, **base)
            r = ex.run_message_size_experiment(cfg, sizes, calls=a.calls)
            rows += output.message_size_rows(r)
            for s_, st in sorted(r.per_size.items()):
                series[f"{mode} {s_}"] = st.latencies_ms
            summary[mode] = {"config": cfg.describe(), "calls": a.calls, "slope_ms_per_kb": r.slope_ms_per_kb,
                             "per_size": {str(k): {"mean_ms": v.mean, "median_ms": v.median,
                                                   "stddev_ms": v.stddev} for k, v in sorted(r.per_size.items())}}
            print(f"{mode} means_ms=" + ",".join(f"{m:.1f}" for m in r.means) + f" slope={r.slope_ms_per_kb:.2f}")
    elif a.experiment == "sm4":
        sizes = tuple(a.sizes) if a.sizes else timing.SM4_SIZES
        t = timing.run_sm4_timing(sizes, reps=a.reps, warmup=a.warmup, seed=seed)
        rows = output.sm4_rows(t)
        summary = {"reps": a.reps, "warmup_discarded": a.warmup, "seed": seed,
                   "enc": {str(k): v.summary() for k, v in t.enc.items()},
                   "dec": {str(k): v.summary() for k, v in t.dec.items()}}
        for size in sorted(t.enc):
            series[f"enc {size}"] = t.enc[size].samples_ms
            series[f"dec {size}"] = t.dec[size].samples_ms
            print(f"sm4 {size} enc_ms={t.enc[size].mean:.4f} dec_ms={t.dec[size].mean:.4f} "
                  f"cov={max(t.enc[size].cov, t.dec[size].cov):.3f}")
    else:
        size = a.size or timing.SM3_PAYLOAD
        t = timing.run_sm3_timing(size, reps=a.reps, warmup=a.warmup, seed=seed)
        rows = output.sm3_rows(t)
        summary = {"reps": a.reps, "warmup_discarded": a.warmup, "seed": seed, "payload_size": size,
                   "distribution": t.samples.summary(), "digest": t.digest,
                   "digests_identical": t.digests_identical, "reference_ms": list(t.reference_ms),
                   "host_noise": t.host_noise}
        series[f"sm3 {size}"] = t.samples.samples_ms
        print(f"sm3 {size} mean_ms={t.samples.mean:.3f} spread={t.samples.spread:.3f} "
              f"identical={t.digests_identical}")

    output.write_csv(csv_path, rows)
    output.write_sidecar(csv_path, {"experiment": a.experiment, "rows": len(rows), "summary": summary})
    if a.histogram:
        output.write_histograms(csv_path.with_suffix(".dat"), series)
    print(f"csv {csv_path}")
    return 0


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--state", default="authros-state", help="deployment state directory")
    common.add_argument("--seed", type=parse_int, default=None,
                        help=f"deterministic randomness ({SEED_ENV} overrides)")
    common.add_argument("--passphrase", default=None, help=f"keystore passphrase (or {PASSPHRASE_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="authros", description="Authenticated data sharing over a simulated ledger.",
                                epilog="exit codes: 0 ok, 1 ledger, 2 config, 3 identity, 4 authorization, "
                                       "5 integrity")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("init-net", parents=[common], help="create a network from a genesis file")
    q.add_argument("--genesis", help="genesis JSON (defaults to a 3-node PoA network)")
    q.add_argument("--consensus", choices=("pow", "poa"))
    q.add_argument("--difficulty", type=parse_int)
    q.add_argument("--nodes", type=int)
    q.add_argument("--force", action="store_true", help="replace an existing network and its keystores")
    q.set_defaults(func=cmd_init_net)

    q = sub.add_parser("register", parents=[common], help="allocate keys and register an identity")
    q.add_argument("name")
    q.add_argument("--token", help="identity token (random when omitted)")
    q.set_defaults(func=cmd_register)

    q = sub.add_parser("monitor", parents=[common], help="monitor a topic and share what is captured")
    q.add_argument("name")
    q.add_argument("--topic", required=True)
    q.add_argument("--type", choices=sorted(TYPE_NAMES), default="odometry")
    q.add_argument("--replay", help="replay file to publish on the bus")
    q.add_argument("--image", help="publish this file once as a compressed image")
    q.set_defaults(func=cmd_monitor)

    q = sub.add_parser("grant", parents=[common], help="let another identity read your data")
    q.add_argument("granter")
    q.add_argument("grantee")
    q.set_defaults(func=cmd_grant)

    q = sub.add_parser("query", parents=[common], help="fetch, check and decrypt shared data")
    q.add_argument("requester")
    q.add_argument("target")
    q.add_argument("--digest", type=parse_hex, help="a specific record (default: latest)")
    q.add_argument("--out", default="authros-out")
    q.set_defaults(func=cmd_query)

    q = sub.add_parser("tamper", parents=[common], help="test hook: corrupt one cached ciphertext byte")
    q.add_argument("--digest", type=parse_hex, required=True)
    q.add_argument("--position", type=int, default=0)
    q.add_argument("--xor", type=parse_int, default=1)
    q.set_defaults(func=cmd_tamper)

    q = sub.add_parser("status", parents=[common], help="replay the chain and print the head")
    q.set_defaults(func=cmd_status)

    q = sub.add_parser("bench", parents=[common], help="run a benchmark and write CSV")
    q.add_argument("experiment", choices=EXPERIMENTS)
    q.add_argument("--consensus", choices=("pow", "poa"), help="one mode only (default: both)")
    q.add_argument("--n", type=int, default=300, help="concurrent submitters")
    q.add_argument("--calls", type=int, default=300, help="calls per message size")
    q.add_argument("--size", type=parse_size, help="payload size (concurrency, sm3)")
    q.add_argument("--sizes", type=parse_size, nargs="+", help="payload sizes (msgsize, sm4)")
    q.add_argument("--reps", type=int, default=300)
    q.add_argument("--warmup", type=int, default=10)
    q.add_argument("--difficulty", type=parse_int)
    q.add_argument("--interval", type=int, help="block interval in ms (sets the timeout)")
    q.add_argument("--out", default="bench-out")
    q.add_argument("--histogram", action="store_true", help="also write gnuplot histogram blocks")
    q.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors are configuration errors (2); --help is 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(Context(args, argv))
    except ProtocolError as exc:
        print(f"authros: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"authros: invalid input: {exc}", file=sys.stderr)
        return 2
