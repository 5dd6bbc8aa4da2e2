import json

import pytest
from hypothesis import given, settings, strategies as st

from authros.bench import (
    CSV_HEADER,
    Distribution,
    ExperimentConfig,
    KB,
    concurrency_rows,
    concurrency_schedule,
    histogram,
    least_squares_slope,
    message_size_rows,
    message_size_schedule,
    read_csv,
    run_concurrency_experiment,
    run_message_size_experiment,
    run_sm3_timing,
    run_sm4_timing,
    sm3_rows,
    sm4_rows,
    write_csv,
    write_histograms,
    write_sidecar,
)
from authros.crypto import sm3_hash


@given(st.integers(0, 10**6), st.integers(0, 60), st.integers(2, 5))
@settings(max_examples=50, deadline=None)
def test_concurrency_schedule_is_a_seeded_permutation(seed, n, nodes):
    a = concurrency_schedule(seed, n, nodes)
    assert a == concurrency_schedule(seed, n, nodes)
    assert sorted(s for s, _ in a) == list(range(n))
    assert all(1 <= v < nodes for _, v in a)


def test_schedules_depend_on_seed():
    assert concurrency_schedule(1, 50) != concurrency_schedule(2, 50)
    sizes = (KB, 2 * KB, 4 * KB, 8 * KB)
    a = message_size_schedule(7, sizes, 20)
    assert a == message_size_schedule(7, sizes, 20)
    assert all(sorted(order) == list(sizes) for _, order in a)
    assert a != message_size_schedule(8, sizes, 20)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig(consensus="pbft")
    with pytest.raises(ValueError):
        ExperimentConfig(concurrency=-1)
    cfg = ExperimentConfig(block_interval_ms=2000)
    assert cfg.timeout_s == 20.0
    assert cfg.describe()["timeout_s"] == 20.0


def test_zero_concurrency_is_empty_and_successful():
    r = run_concurrency_experiment(ExperimentConfig(concurrency=0))
    assert (r.success_count, r.failure_count, r.total_time_ms) == (0, 0, 0.0)
    assert r.success_rate == 1.0


@pytest.mark.parametrize("mode", ["poa", "pow"])
def test_small_concurrency_run(mode):
    cfg = ExperimentConfig(consensus=mode, concurrency=12, difficulty=1 << 8)
    r = run_concurrency_experiment(cfg)
    assert r.success_count == 12 and r.success_rate == 1.0
    assert len(r.submission_order) == 12
    assert all(lat > 0 for lat in r.latencies_ms)
    rows = concurrency_rows(r, mode, 12)
    assert len(rows) == 12 and all(row.success for row in rows)


def test_submission_order_is_reproducible():
    cfg = ExperimentConfig(concurrency=8)
    assert run_concurrency_experiment(cfg).submission_order == run_concurrency_experiment(cfg).submission_order


def test_small_message_size_run():
    cfg = ExperimentConfig(consensus="poa")
    r = run_message_size_experiment(cfg, sizes=(KB, 4 * KB), calls=4)
    assert set(r.per_size) == {KB, 4 * KB}
    assert all(all(st.successes) and len(st.latencies_ms) == 4 for st in r.per_size.values())
    assert len(r.submission_order) == 8
    assert len(message_size_rows(r)) == 8


def test_least_squares_slope():
    assert least_squares_slope([1, 2, 4, 8], [3, 5, 9, 17]) == pytest.approx(2.0)
    assert least_squares_slope([1, 2, 3], [5, 5, 5]) == pytest.approx(0.0, abs=1e-12)


def test_distribution_stats():
    d = Distribution([1.0, 2.0, 3.0, 4.0])
    assert d.mean == 2.5
    assert d.spread == pytest.approx(3 / 2.5)
    assert d.cov == pytest.approx(d.stddev / 2.5)
    assert d.summary()["n"] == 4


def test_sm4_timing_small():
    t = run_sm4_timing(sizes=(KB, 2 * KB), reps=5, warmup=2)
    assert set(t.enc) == {KB, 2 * KB}
    assert all(len(d.samples_ms) == 5 for d in t.enc.values())
    assert t.ratio(KB) > 0
    rows = sm4_rows(t)
    assert {r.param for r in rows} == {"enc-1024", "enc-2048", "dec-1024", "dec-2048"}


def test_sm3_timing_digest_is_stable():
    t = run_sm3_timing(payload_size=64 * KB, reps=4, warmup=1, host_probe=False)
    assert t.digests_identical
    assert len(t.samples.samples_ms) == 4
    assert t.host_noise == {}
    assert len(sm3_rows(t)) == 4


def test_sm3_timing_digest_matches_direct_hash():
    from authros.crypto import SeededEntropy
    t = run_sm3_timing(payload_size=4 * KB, reps=1, warmup=0, seed=5, host_probe=True)
    assert t.digest == sm3_hash(SeededEntropy("sm3-timing/5").token_bytes(4 * KB))
    assert "reference_loop_spread" in t.host_noise


def test_csv_round_trip_and_sidecar(tmp_path):
    t = run_sm4_timing(sizes=(KB,), reps=3, warmup=0)
    rows = sm4_rows(t)
    path = write_csv(tmp_path / "out" / "sm4.csv", rows)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    back = read_csv(path)
    assert [(r.param, r.rep) for r in back] == [(r.param, r.rep) for r in rows]
    assert all(abs(a.value_ms - b.value_ms) < 1e-6 for a, b in zip(back, rows))
    side = write_sidecar(path, {"digest": b"\x01\x02", "config": {"reps": 3}})
    assert side.name == "sm4.json"
    assert json.loads(side.read_text())["digest"] == "0102"


def test_read_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_csv(p)


def test_histogram_counts_everything(tmp_path):
    values = [float(i % 7) for i in range(100)]
    h = histogram(values, bins=5)
    assert sum(k for _, k, _ in h) == 100
    assert sum(f for _, _, f in h) == pytest.approx(1.0)
    p = write_histograms(tmp_path / "h.dat", {"a": values, "b": values[:10]}, bins=5)
    blocks = p.read_text().split("\n\n\n")
    assert len(blocks) == 2 and blocks[0].startswith("# a")
