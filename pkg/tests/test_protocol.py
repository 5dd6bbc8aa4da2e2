import itertools
import random
from dataclasses import replace

import pytest
from cryptography.hazmat.primitives import hashes
from hypothesis import given, settings, strategies as st

from authros.crypto import SeededEntropy, Sm2Signature, open_sealed, sm2_decrypt, sm2_keygen
from authros.ledger import GenesisConfig, Network
from authros.protocol import (
    AuthServer,
    AuthenticityCheckFailed,
    AuthorizationError,
    CacheMiss,
    Client,
    Command,
    CorruptEnvelope,
    Credentials,
    DecryptError,
    DigestMismatch,
    DuplicateName,
    ForgedNodeData,
    IdentityCheckFailed,
    InnerFrame,
    InvalidKeyAlloc,
    KeyAllocMessage,
    NoPendingAlloc,
    OuterFrame,
    PlainRecord,
    ServerConfig,
    StaleSystemKey,
    SystemKeyRing,
    UnknownTargetError,
    UploadUnconfirmed,
    build_transfer,
    decrypt_shared,
    key_alloc_client,
    monitor_and_share,
    onchain_token,
    open_transfer,
    publish_system_keys,
)
from authros.protocol.frames import keyalloc_plaintext
from authros.rosbus import ImageMsg, Master, MessageType, OdometryMsg, monitor

ENT = SeededEntropy(99)
_SEEDS = itertools.count(1000)


def oracle_sm3(data: bytes) -> bytes:
    h = hashes.Hash(hashes.SM3())
    h.update(data)
    return h.finalize()


@pytest.fixture(scope="module")
def net():
    with Network(GenesisConfig(consensus="poa")) as n:
        yield n


@pytest.fixture
def server(net):
    return AuthServer(net, entropy=SeededEntropy(next(_SEEDS)))


def make_clients(server, *names):
    out = []
    for n in names:
        c = Client.create(n, f"pw-{n}".encode(), ENT)
        c.register(server)
        out.append(c)
    return out


# --- frames --------------------------------------------------------------------

odo = OdometryMsg(lv=(1.5, -2.0, 0.25), av=(0.0, 0.1, -0.1), ts=(1700000000, 123))


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=2048), st.binary(min_size=1, max_size=32), st.integers(0, 2**62),
       st.sampled_from(list(Command)), st.text(min_size=1, max_size=20))
def test_frame_layers_roundtrip(ct1, token, ts, cmd, name):
    sig = Sm2Signature(5, 7)
    nd2 = InnerFrame(ct1, MessageType.GENERIC, token, ts, cmd, sig)
    assert InnerFrame.decode(nd2.encode()) == nd2
    nd3 = OuterFrame(ct1, name)
    assert OuterFrame.decode(nd3.encode()) == nd3
    rec = PlainRecord.from_message(ct1)
    assert PlainRecord.decode(rec.encode()) == rec
    km = KeyAllocMessage(ct1, sig, ts, cmd)
    assert KeyAllocMessage.decode(km.encode()) == km


def test_plain_record_odometry_roundtrip():
    rec = PlainRecord.from_message(odo)
    assert PlainRecord.decode(rec.encode()) == rec
    assert rec.message() == odo


def test_envelope_layers_decode_to_prior_layers():
    creds = Credentials.generate("alice", b"pw", ENT)
    env = build_transfer(creds, OdometryMsg(), 1234, entropy=ENT)
    opened = open_transfer(creds.sm4_key, env.wire())
    assert opened == env
    assert PlainRecord.decode(open_sealed(creds.sm4_key, env.ct1)) == env.nd1
    assert InnerFrame.decode(open_sealed(creds.sm4_key, env.ct2)) == env.nd2
    assert env.nd1.message() == OdometryMsg()


def test_envelope_fresh_iv_and_large_payload():
    creds = Credentials.generate("alice", b"pw", ENT)
    a = build_transfer(creds, odo, 1, entropy=ENT)
    b = build_transfer(creds, odo, 1, entropy=ENT)
    assert a.nd1 == b.nd1 and a.ct1 != b.ct1
    img = ImageMsg(ENT.token_bytes(58 * 1024))
    env = build_transfer(creds, img, 2, entropy=ENT)
    assert decrypt_shared(env.ct1, creds.sm4_key).message() == img


# --- key allocation --------------------------------------------------------------

def test_key_alloc_roundtrip(server):
    creds = Credentials.generate("x", b"t", ENT)
    entry = server.keyring.current()
    msg = key_alloc_client(creds.sm4_key, creds.keypair, entry, entropy=ENT)
    alloc = server.pending[server.key_alloc_server(msg.encode())]
    assert alloc.sm4_key == creds.sm4_key and alloc.public_key == creds.keypair.public_key
    assert len(keyalloc_plaintext(creds.sm4_key, creds.keypair.public_key)) == 81
    assert len(sm2_decrypt(server.keyring.private_for(entry.epoch), msg.ct)) == 81
    again = key_alloc_client(creds.sm4_key, creds.keypair, entry, entropy=ENT)
    assert again.ct != msg.ct


def test_key_alloc_tamper_and_wrong_signature(server):
    creds = Credentials.generate("x", b"t", ENT)
    other = Credentials.generate("y", b"t", ENT)
    entry = server.keyring.current()
    msg = key_alloc_client(creds.sm4_key, creds.keypair, entry, entropy=ENT)
    flipped = bytearray(msg.ct)
    flipped[70] ^= 0x04
    with pytest.raises(InvalidKeyAlloc, match="invalid ciphertext"):
        server.key_alloc_server(replace(msg, ct=bytes(flipped)))
    stolen = key_alloc_client(other.sm4_key, other.keypair, entry, entropy=ENT).signature
    with pytest.raises(AuthenticityCheckFailed, match="authenticity check failed"):
        server.key_alloc_server(replace(msg, signature=stolen))


def test_system_key_epochs_and_grace(net):
    now = [0]
    srv = AuthServer(net, ServerConfig(rotation_period_ms=1000, grace_epochs=1), entropy=ENT,
                     clock=lambda: now[0])
    e0 = srv.keyring.current()
    creds = Credentials.generate("x", b"t", ENT)
    old = key_alloc_client(creds.sm4_key, creds.keypair, e0, entropy=ENT)
    now[0] = 1500  # epoch 1 published, epoch 0 still in grace
    assert srv.key_alloc_server(old)
    now[0] = 2500  # epoch 2: epoch 0 has expired
    with pytest.raises(StaleSystemKey, match="stale system key"):
        srv.key_alloc_server(old)
    keys = [e.public_key for e in srv.keyring.published()]
    assert len(keys) == 3 and len(set(keys)) == 3
    ring = SystemKeyRing(ENT)
    for epoch in range(3):
        publish_system_keys(type("S", (), {"keyring": ring})(), epoch)
    assert [e.epoch for e in ring.published()] == [0, 1, 2]


# --- registration ----------------------------------------------------------------

def test_register_user(server, net):
    [alice] = make_clients(server, "alice")
    ident = alice.identity
    assert ident.v == {} and ident.d == [] and ident.sigma == alice.creds.sm4_key
    assert net.query(ident.addr, onchain_token(ident.sigma), ident.addr) == []
    dup = Client.create("alice", b"pw2", ENT)
    with pytest.raises(DuplicateName):
        dup.register(server)
    with pytest.raises(NoPendingAlloc):
        server.register_user("nobody", b"t", b"\x00" * 32)


# --- transfer intake --------------------------------------------------------------

def test_receive_transfer_honest(server, net):
    [alice] = make_clients(server, "alice")
    env = build_transfer(alice.creds, odo, 1700000000123, entropy=ENT)
    receipt = server.receive_transfer(env.wire())
    assert receipt.digest == oracle_sm3(env.ct1)
    rows = net.query(alice.identity.addr, onchain_token(alice.identity.sigma), alice.identity.addr)
    assert rows[-1] == (oracle_sm3(server.cache.get(receipt.digest).ciphertext), b"1700000000123")


def test_receive_transfer_failures(server):
    alice, bob = make_clients(server, "alice", "bob")
    env = build_transfer(alice.creds, odo, 1, entropy=ENT)
    # ct2 bit flip
    ct2 = bytearray(env.ct2)
    ct2[20] ^= 1
    with pytest.raises(CorruptEnvelope, match="corrupt envelope"):
        server.receive_transfer(OuterFrame(bytes(ct2), "alice").encode())
    # unknown name
    with pytest.raises(IdentityCheckFailed):
        server.receive_transfer(OuterFrame(env.ct2, "mallory").encode())
    # re-signed by a key that was never registered
    rogue = replace(alice.creds, keypair=sm2_keygen(ENT))
    with pytest.raises(ForgedNodeData, match="forged node data"):
        server.receive_transfer(build_transfer(rogue, odo, 1, entropy=ENT).wire())
    # signed by a registered user but under another name
    imposter = replace(alice.creds, keypair=bob.creds.keypair)
    with pytest.raises(ForgedNodeData):
        server.receive_transfer(build_transfer(imposter, odo, 1, entropy=ENT).wire())
    # right keys, wrong token
    with pytest.raises(IdentityCheckFailed, match="token"):
        server.receive_transfer(build_transfer(replace(alice.creds, token=b"x"), odo, 1, entropy=ENT).wire())
    with pytest.raises(CorruptEnvelope):
        server.receive_transfer(b"\x00\x00")


def test_identity_check_order(server):
    """Name lookup wins over a bad ciphertext, which wins over a bad signature."""
    [alice] = make_clients(server, "alice")
    rogue = replace(alice.creds, keypair=sm2_keygen(ENT), token=b"wrong")
    env = build_transfer(rogue, odo, 1, entropy=ENT)
    with pytest.raises(ForgedNodeData):
        server.receive_transfer(env.wire())
    with pytest.raises(IdentityCheckFailed):
        server.receive_transfer(OuterFrame(b"junk", "ghost").encode())
    with pytest.raises(CorruptEnvelope):
        server.receive_transfer(OuterFrame(b"junk" * 4, "alice").encode())


def test_upload_unconfirmed_keeps_cache():
    net = Network(GenesisConfig(consensus="poa")).start()
    server = AuthServer(net, ServerConfig(ledger_timeout_s=0.3), entropy=ENT)
    [alice] = make_clients(server, "alice")
    net.stop()  # nobody produces blocks any more
    env = build_transfer(alice.creds, odo, 5, entropy=ENT)
    with pytest.raises(UploadUnconfirmed) as info:
        server.receive_transfer(env.wire())
    assert server.cache.get(info.value.digest).ciphertext == env.ct1


# --- grant / query ------------------------------------------------------------------

def test_grant_query_decrypt(server):
    alice, bob, carol = make_clients(server, "alice", "bob", "carol")
    assert alice.query(server, "alice") is None  # nothing shared yet
    payload = ENT.token_bytes(58 * 1024)
    receipt = alice.share(server, ImageMsg(payload), 77)
    with pytest.raises(AuthorizationError):
        bob.fetch(server, "alice")
    alice.grant(server, "bob")
    assert bob.sync_grants(server) == ["alice"]
    assert bob.identity.v["alice"] == alice.creds.sm4_key
    ct = bob.query(server, "alice")
    assert oracle_sm3(ct) == receipt.digest
    assert bob.fetch(server, "alice").message().payload == payload
    alice.grant(server, bob.identity.addr)  # by address, and repeated
    assert bob.sync_grants(server) == []
    assert bob.identity.v == {"alice": alice.creds.sm4_key}
    with pytest.raises(AuthorizationError):
        carol.fetch(server, "alice")
    with pytest.raises(UnknownTargetError):
        carol.query(server, "nobody")
    with pytest.raises(IdentityCheckFailed):
        alice.grant(server, "nobody")


def test_request_signatures_checked(server):
    alice, bob = make_clients(server, "alice", "bob")
    sig = Sm2Signature(1, 1)
    with pytest.raises(AuthenticityCheckFailed):
        server.grant_authority("alice", "bob", sig)
    with pytest.raises(AuthenticityCheckFailed):
        server.query_and_check("bob", "alice", onchain_token(alice.creds.sm4_key), sig)


def test_query_specific_digest_and_cache_states(server):
    [alice] = make_clients(server, "alice")
    r1 = alice.share(server, b"first", 1)
    r2 = alice.share(server, b"second", 2)
    assert alice.fetch(server, "alice", r1.digest).body == b"first"
    assert alice.fetch(server, "alice").body == b"second"
    server.cache.drop(r2.digest)
    with pytest.raises(CacheMiss):
        alice.query(server, "alice")
    with pytest.raises(CacheMiss):
        alice.query(server, "alice", b"\x01" * 32)
    server.cache.tamper(r1.digest, 3)
    with pytest.raises(DigestMismatch):
        alice.query(server, "alice", r1.digest)
    server.cache.tamper(r1.digest, 3)  # restoring the bytes does not lift the quarantine
    with pytest.raises(DigestMismatch):
        alice.query(server, "alice", r1.digest)


def test_decrypt_with_wrong_key_never_returns_garbage():
    creds = Credentials.generate("a", b"t", ENT)
    env = build_transfer(creds, odo, 1, entropy=ENT)
    rng = random.Random(4)
    for _ in range(300):
        with pytest.raises(DecryptError):
            decrypt_shared(env.ct1, rng.randbytes(16))


def test_monitor_and_share_pipeline(server):
    [alice] = make_clients(server, "alice")
    master = Master()
    pub = master.register("odom", "/robot/odom", "publisher")
    stream = monitor(master, "/robot/odom", "Odometry")
    for i in range(4):
        pub.publish(OdometryMsg(ts=(i, 0)))
    pub.publish(b"corrupt")
    out = monitor_and_share(alice, server, stream)
    assert sum(hasattr(r, "digest") for r in out) == 4
    assert [r.error.startswith("parse error") for r in out if not hasattr(r, "digest")] == [True]


# --- trace-level properties -----------------------------------------------------------

def test_key_confidentiality_byte_scan(net, server):
    clients = make_clients(server, "k1", "k2", "k3")
    clients[0].share(server, b"hello", 1)
    clients[0].grant(server, "k2")
    clients[1].share(server, odo, 2)
    chain_bytes = b"".join(bytes.fromhex(line) for line in net.export_chain(via=0))
    for c in clients:
        assert c.creds.sm4_key not in chain_bytes
        assert onchain_token(c.creds.sm4_key) in chain_bytes


def test_fuzzed_share_grant_query_integrity(net):
    server = AuthServer(net, entropy=SeededEntropy(1))
    names = ["u0", "u1", "u2", "u3"]
    clients = dict(zip(names, make_clients(server, *names)))
    granted = {(n, n) for n in names}
    shared = {n: [] for n in names}
    rng = random.Random(2024)
    checked = 0
    for step in range(1000):
        op = rng.random()
        a, b = rng.choice(names), rng.choice(names)
        if op < 0.12:
            body = rng.randbytes(rng.randint(1, 300))
            shared[a].append((clients[a].share(server, body, step).digest, body))
        elif op < 0.2:
            clients[a].grant(server, b)
            clients[b].sync_grants(server)
            granted.add((a, b))
        else:
            if (b, a) not in granted:
                with pytest.raises(AuthorizationError):
                    clients[a].query(server, b)
                continue
            if not shared[b]:
                assert clients[a].query(server, b) is None
                continue
            digest, body = rng.choice(shared[b])
            ct = clients[a].query(server, b, digest)
            assert oracle_sm3(ct) == digest
            assert decrypt_shared(ct, clients[a].key_for(b)).body == body
            checked += 1
    assert checked > 300


def test_server_state_roundtrip(server, net):
    alice, bob = make_clients(server, "alice", "bob")
    r = alice.share(server, b"data", 9)
    alice.grant(server, "bob")
    again = AuthServer.from_dict(server.to_dict(), net, entropy=ENT)
    assert bob.sync_grants(again) == ["alice"]
    assert bob.fetch(again, "alice", r.digest).body == b"data"


def test_any_ct2_flip_is_rejected(server):
    """CBC has no MAC: flips that keep the frame parseable land in ct1 and fail the signature."""
    [alice] = make_clients(server, "alice")
    env = build_transfer(alice.creds, odo, 1, entropy=ENT)
    rng = random.Random(8)
    seen = set()
    for _ in range(150):
        ct2 = bytearray(env.ct2)
        ct2[rng.randrange(len(ct2))] ^= 1 << rng.randrange(8)
        with pytest.raises((CorruptEnvelope, ForgedNodeData, IdentityCheckFailed)) as info:
            server.receive_transfer(OuterFrame(bytes(ct2), "alice").encode())
        seen.add(info.type)
    assert CorruptEnvelope in seen
