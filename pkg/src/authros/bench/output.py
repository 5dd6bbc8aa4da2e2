"""CSV rows, JSON sidecars and gnuplot-style histograms for benchmark results."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_HEADER = ("experiment", "consensus", "param", "rep", "value_ms", "success")


@dataclass(frozen=True)
class Row:
    experiment: str
    consensus: str
    param: str
    rep: int
    value_ms: float
    success: bool

    def as_list(self) -> list:
        return [self.experiment, self.consensus, self.param, self.rep, f"{self.value_ms:.6f}",
                int(self.success)]


def concurrency_rows(result, consensus: str, n: int) -> list[Row]:
    return [Row("concurrency", consensus, str(n), i, lat, ok)
            for i, (lat, ok) in enumerate(zip(result.latencies_ms, result.successes))]


def message_size_rows(result) -> list[Row]:
    rows = []
    for size in sorted(result.per_size):
        st = result.per_size[size]
        rows += [Row("msgsize", result.consensus, str(size), i, lat, ok)
                 for i, (lat, ok) in enumerate(zip(st.latencies_ms, st.successes))]
    return rows


def sm4_rows(timing) -> list[Row]:
    rows = []
    for op, table in (("enc", timing.enc), ("dec", timing.dec)):
        for size in sorted(table):
            rows += [Row("sm4", "-", f"{op}-{size}", i, v, True) for i, v in enumerate(table[size].samples_ms)]
    return rows


def sm3_rows(timing) -> list[Row]:
    return [Row("sm3", "-", str(timing.payload_size), i, v, timing.digests_identical)
            for i, v in enumerate(timing.samples.samples_ms)]


def write_csv(path: str | Path, rows: Iterable[Row]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.as_list())
    return path


def read_csv(path: str | Path) -> list[Row]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError("unexpected CSV header")
        return [Row(d["experiment"], d["consensus"], d["param"], int(d["rep"]), float(d["value_ms"]),
                    d["success"] == "1") for d in reader]


def write_sidecar(csv_path: str | Path, doc: dict) -> Path:
    """Exact config and summary next to the CSV (``<name>.json``)."""
    path = Path(csv_path).with_suffix(".json")
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, bytes):
        return o.hex()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def histogram(values: Sequence[float], bins: int = 20) -> list[tuple[float, int, float]]:
    """``(bin_center, count, frequency)`` triples."""
    counts, edges = np.histogram(np.asarray(values, float), bins=bins)
    total = max(1, int(counts.sum()))
    centers = (edges[:-1] + edges[1:]) / 2
    return [(float(c), int(k), int(k) / total) for c, k in zip(centers, counts)]


def write_histograms(path: str | Path, series: dict[str, Sequence[float]], bins: int = 20) -> Path:
    """One gnuplot data block per series, separated by two blank lines (use ``index``)."""
    path = Path(path)
    blocks = []
    for name, values in series.items():
        lines = [f"# {name}", "# bin_center_ms count frequency"]
        lines += [f"{c:.6f} {k} {f:.6f}" for c, k, f in histogram(values, bins)]
        blocks.append("\n".join(lines))
    path.write_text("\n\n\n".join(blocks) + "\n")
    return path
