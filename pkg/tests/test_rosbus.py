import math
import threading

import pytest
from hypothesis import given, settings, strategies as st

from authros.rosbus import (
    CaptureError,
    Captured,
    DuplicateNode,
    ImageMsg,
    Master,
    MessageType,
    OdometryMsg,
    ParseError,
    ReplayFormatError,
    ReplayRecord,
    RoleError,
    TopicName,
    inject,
    master_register,
    monitor,
    parse_image,
    parse_odometry,
    publish,
    read_replay,
    write_replay,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@st.composite
def odometry(draw):
    q = [draw(st.floats(-1, 1)) for _ in range(4)]
    n = math.sqrt(sum(x * x for x in q))
    if n < 1e-3:
        q, n = [1.0, 0, 0, 0], 1.0
    q = [x / n for x in q]
    m = [[draw(finite) for _ in range(6)] for _ in range(6)]
    cov = [m[min(r, c)][max(r, c)] for r in range(6) for c in range(6)]
    return OdometryMsg(
        tuple(draw(finite) for _ in range(3)),
        tuple(draw(finite) for _ in range(3)),
        tuple(draw(finite) for _ in range(3)) + tuple(q),
        tuple(cov),
        (draw(st.integers(0, 2**63)), draw(st.integers(0, 999_999_999))),
    )


def test_topic_names():
    assert str(TopicName("/robot/odom")) == "/robot/odom"
    for bad in ["", "robot/odom", "/", "/a//b", "/a b"]:
        with pytest.raises(ValueError):
            TopicName(bad)


def test_zero_motion_roundtrip():
    m = OdometryMsg()
    raw = m.encode()
    assert raw[:8] == b"AROSODOM" and len(raw) == 8 + 49 * 8 + 16
    assert parse_odometry(raw) == m


@settings(max_examples=200, deadline=None)
@given(odometry())
def test_odometry_roundtrip(m):
    assert parse_odometry(m.encode()) == m


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=1, max_size=4096), st.sampled_from(["jpeg", "png", "x"]))
def test_image_roundtrip(payload, tag):
    m = ImageMsg(payload, tag)
    assert parse_image(m.encode()) == m


def test_odometry_parse_errors():
    raw = OdometryMsg().encode()
    with pytest.raises(ParseError):
        parse_odometry(raw[:-1])
    with pytest.raises(ParseError):
        parse_odometry(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ParseError):
        parse_odometry(b"")


def test_odometry_invariants():
    with pytest.raises(ValueError):
        OdometryMsg(pose=(0, 0, 0, 1.01, 0, 0, 0))
    cov = [0.0] * 36
    cov[1] = 1e-3
    with pytest.raises(ValueError):
        OdometryMsg(cov=tuple(cov))
    with pytest.raises(ValueError):
        ImageMsg(b"")


def test_register_and_fanout():
    m = Master()
    pub = master_register(m, "node1", "/robot/odom", "publisher")
    subs = [master_register(m, f"s{i}", "/robot/odom", "subscriber") for i in range(3)]
    with pytest.raises(DuplicateNode):
        master_register(m, "node1", "/robot/odom", "subscriber")
    assert publish(pub, OdometryMsg()) == 3
    for s in subs:
        [d] = s.drain()
        assert parse_odometry(d.payload) == OdometryMsg()
    with pytest.raises(RoleError):
        publish(subs[0], b"x")


def test_publish_without_subscribers():
    m = Master()
    pub = m.register("p", "/quiet", "publisher")
    assert pub.publish(b"hello") == 0


def test_per_publisher_fifo_under_concurrency():
    m = Master()
    subs = [m.register(f"s{i}", "/t", "subscriber") for i in range(2)]
    pubs = [m.register(f"p{i}", "/t", "publisher") for i in range(4)]

    def run(p):
        for k in range(200):
            p.publish(f"{p.node_id}:{k}".encode())

    threads = [threading.Thread(target=run, args=(p,)) for p in pubs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for s in subs:
        got = s.drain()
        assert len(got) == 800
        for p in pubs:
            mine = [int(d.payload.split(b":")[1]) for d in got if d.publisher == p.node_id]
            assert mine == list(range(200))


def test_monitor_parses_and_reports_errors():
    m = Master(clock=lambda: 42)
    pub = m.register("odom", "/robot/odom", "publisher")
    for _ in range(5):
        pub.publish(OdometryMsg())
    mon = monitor(m, "/robot/odom", MessageType.ODOMETRY)
    assert mon.drain() == []  # nothing replayed from before the subscription
    msg = OdometryMsg(lv=(1.0, 2.0, 3.0), ts=(10, 5))
    pub.publish(msg)
    pub.publish(b"garbage")
    pub.publish(OdometryMsg())
    events = mon.drain()
    assert isinstance(events[0], Captured) and events[0].message == msg and events[0].capture_time == 42
    assert isinstance(events[1], CaptureError)
    assert isinstance(events[2], Captured)


def test_monitor_does_not_change_delivery():
    def counts(with_monitor):
        m = Master()
        pub = m.register("p", "/robot/odom", "publisher")
        subs = [m.register(f"s{i}", "/robot/odom", "subscriber") for i in range(2)]
        if with_monitor:
            monitor(m, "/robot/odom", "Odometry")
        for _ in range(3):
            pub.publish(OdometryMsg())
        return [len(s.drain()) for s in subs]

    assert counts(True) == counts(False) == [3, 3]


def test_replay_file_roundtrip(tmp_path):
    recs = [ReplayRecord("/robot/odom", MessageType.ODOMETRY, OdometryMsg(ts=(i, 0)).encode()) for i in range(5)]
    recs.append(ReplayRecord("/robot/CompressedImage", MessageType.COMPRESSED_IMAGE, ImageMsg(b"\xff" * 10).encode()))
    p = tmp_path / "traffic.replay"
    write_replay(p, recs)
    assert read_replay(p) == recs
    m = Master()
    mon = monitor(m, "/robot/odom", "Odometry")
    assert inject(m, recs) == 5
    assert [e.message.ts[0] for e in mon.drain()] == list(range(5))


def test_replay_rejects_bad_lines(tmp_path):
    p = tmp_path / "bad.replay"
    p.write_text("zz 00 00\n")
    with pytest.raises(ReplayFormatError):
        read_replay(p)
