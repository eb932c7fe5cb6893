"""Benchmark tables for the switching network, the PSI step and full alignment.

Times depend on the machine; byte counts are exact and reproducible.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass

from .crypto import RandomSource
from .formats import generate_datasets
from .osn import mosn_run
from .perm import Injection
from .psa import run_level2, server_aided_psi
from .transport import open_pair

MB = 1e6


@dataclass
class BenchRow:
    target: str
    size: int
    bandwidth: str
    online_ms: float
    offline_ms: float
    total_ms: float
    comm_mb: float
    c: int | None = None


def _bw_label(rate: float | None) -> str:
    if rate is None:
        return "unlimited"
    for unit, scale in (("Gbit/s", 1e9), ("Mbit/s", 1e6), ("kbit/s", 1e3)):
        if rate >= scale:
            return f"{rate / scale:g} {unit}"
    return f"{rate:g} bit/s"


def bench_osn(m: int, rate: float | None = None, seed: int = 0, ot_mode: str = "dealer") -> BenchRow:
    rng = RandomSource.from_int(seed)
    U = rng.array((m, 16))
    pi = Injection(rng.permutation(m)[: m // 2], m)
    channels = open_pair("throttled", rate_bits_per_s=rate) if rate else None
    res = mosn_run(pi, U, ot_mode=ot_mode, seed=seed, channels=channels)
    comm = res.receiver_channel.stats().bytes_sent + res.sender_channel.stats().bytes_sent
    return BenchRow("osn", m, _bw_label(rate), 1000 * res.online_s, 1000 * res.offline_s,
                    1000 * (res.online_s + res.offline_s), comm / MB)


def bench_psi(n: int, rate: float | None = None, seed: int = 0) -> BenchRow:
    d1, d2 = generate_datasets(n, n, 0.5, 1, seed)
    kind = "throttled" if rate else "memory"
    r = server_aided_psi(d1.ids, d2.ids, seed=seed, channel_kind=kind, rate_bits_per_s=rate)
    ms = 1000 * r["seconds"]
    return BenchRow("psi", n, _bw_label(rate), ms, 0.0, ms, r["comm_bytes"] / MB, r["c"])


def bench_psa(n: int, rate: float | None = None, seed: int = 0, ot_mode: str = "dealer",
              attr_width: int = 16) -> BenchRow:
    d1, d2 = generate_datasets(n, n, 0.5, attr_width, seed)
    kind = "throttled" if rate else "memory"
    t = time.perf_counter()
    out = run_level2(d1, d2, ot_mode=ot_mode, seed=seed, channel_kind=kind, rate_bits_per_s=rate)
    total = 1000 * (time.perf_counter() - t)
    server = out["server"]
    comm = sum(o.bytes_sent for o in out.values())
    return BenchRow("psa", n, _bw_label(rate), server.online_ms, server.offline_ms, total, comm / MB, server.c)


RUNNERS = {"osn": bench_osn, "psi": bench_psi, "psa": bench_psa}


def run_bench(target: str, sizes, bandwidths=(None,), seed: int = 0) -> list[BenchRow]:
    if target not in RUNNERS:
        raise ValueError(f"unknown benchmark target {target!r}")
    return [RUNNERS[target](size, rate, seed) for size in sizes for rate in bandwidths]


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    fields = list(BenchRow.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
    return buf.getvalue()


def to_text(rows: list[BenchRow]) -> str:
    head = f"{'target':<6} {'size':>9} {'bandwidth':>12} {'online ms':>11} {'offline ms':>11} " \
           f"{'total ms':>11} {'comm MB':>10} {'c':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        c = "" if r.c is None else str(r.c)
        lines.append(f"{r.target:<6} {r.size:>9} {r.bandwidth:>12} {r.online_ms:>11.1f} {r.offline_ms:>11.1f} "
                     f"{r.total_ms:>11.1f} {r.comm_mb:>10.3f} {c:>8}")
    return "\n".join(lines)
