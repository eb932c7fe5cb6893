"""Command line: ``psalign gen | run | reveal | verify | estimate-he | bench``.

Exit codes: 0 success, 1 usage or input error, 2 protocol abort, 3 a
``verify`` mismatch. Set ``PSALIGN_LOG`` (e.g. ``DEBUG``) for log output.
"""

from __future__ import annotations

import json
import logging
import os
import re
import sys
from pathlib import Path

import click

from . import bench as bench_mod
from .formats import (FormatError, ensure_parent, generate_datasets, read_dataset, read_join, read_shares,
                      write_dataset, write_ids, write_join, write_shares)
from .he import HeCostModel, estimate_he
from .oprf import OprfError
from .osn import DEFAULT_LABEL_BITS, MosnError
from .ot import OtError
from .psa import (Dataset, ProtocolAbort, SessionConfig, join_multiset, level1_p1, level1_p2, level2_p1,
                  level2_p2, level2_server, party_sources, plain_inner_join)
from .transport import (ChannelClosed, Endpoint, FrameError, ThrottledEndpoint, TcpListener,
                        UnexpectedFrame, tcp_connect)

log = logging.getLogger("psalign")

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_MISMATCH = 0, 1, 2, 3
PROTOCOL_ERRORS = (ProtocolAbort, FrameError, ChannelClosed, UnexpectedFrame, OtError, MosnError, OprfError)

_RATE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:e[+-]?\d+)?)\s*([kKmMgG]?)(?:bit/s|bps|b)?\s*$")
_SCALE = {"": 1, "k": 1e3, "m": 1e6, "g": 1e9}


def parse_rate(text: str) -> float | None:
    """``"500M"``, ``"1G"``, ``"1e9"`` or ``"10Gbit/s"`` to bits per second; ``none`` for no limit."""
    if text.strip().lower() in ("none", "unlimited", "0"):
        return None
    mt = _RATE.match(text)
    if not mt:
        raise click.BadParameter(f"cannot read bandwidth {text!r}")
    return float(mt.group(1)) * _SCALE[mt.group(2).lower()]


def parse_size(text: str) -> int:
    text = text.strip()
    if text.startswith("2^"):
        return 1 << int(text[2:])
    return int(text)


class _Session:
    """Endpoints opened by ``run``, kept for error context and cleanup."""

    def __init__(self, rate: float | None):
        self.rate = rate
        self.endpoints: dict[str, Endpoint] = {}
        self.listeners: list[TcpListener] = []

    def _wrap(self, name: str, ep: Endpoint) -> Endpoint:
        if self.rate:
            ep = ThrottledEndpoint(ep, self.rate)
        self.endpoints[name] = ep
        return ep

    def accept(self, name: str, addr: str, timeout: float) -> Endpoint:
        lst = TcpListener(addr)
        self.listeners.append(lst)
        log.info("waiting for %s on %s", name, lst.address)
        ep = lst.accept(name, timeout=timeout)
        lst.close()
        return self._wrap(name, ep)

    def connect(self, name: str, addr: str, timeout: float) -> Endpoint:
        log.info("connecting to %s at %s", name, addr)
        return self._wrap(name, tcp_connect(addr, name, retry_s=timeout))

    def context(self) -> str:
        parts = []
        for name, ep in self.endpoints.items():
            got = ",".join(t.name for t in ep.transcript) or "nothing"
            parts.append(f"{name}: received [{got}]")
        return "; ".join(parts)

    def close(self) -> None:
        for ep in self.endpoints.values():
            ep.close()
        for lst in self.listeners:
            lst.close()


@click.group()
def cli():
    """Private set alignment: secret-shared inner joins of ID-keyed datasets."""


@cli.command()
@click.option("--n", "n", type=int, required=True, help="records in P1's dataset")
@click.option("--m", "m", type=int, required=True, help="records in P2's dataset")
@click.option("--alpha", type=float, default=0.5, show_default=True, help="overlap fraction of min(n, m)")
@click.option("--attr-width", type=int, default=16, show_default=True, help="attribute bytes per record")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p1-out", type=click.Path(dir_okay=False), default="p1.csv", show_default=True)
@click.option("--p2-out", type=click.Path(dir_okay=False), default="p2.csv", show_default=True)
def gen(n, m, alpha, attr_width, seed, p1_out, p2_out):
    """Write two random datasets with a known overlap."""
    if not 0 <= alpha <= 1:
        raise click.BadParameter("must lie in [0, 1]", param_hint="--alpha")
    d1, d2 = generate_datasets(n, m, alpha, attr_width, seed)
    for path, ds in ((p1_out, d1), (p2_out, d2)):
        ensure_parent(path)
        write_dataset(path, ds)
    click.echo(json.dumps({"p1": p1_out, "p2": p2_out, "shared": int(alpha * min(n, m))}))


@cli.command()
@click.option("--role", type=click.Choice(["p1", "p2", "server"]), required=True)
@click.option("--level", type=click.IntRange(1, 2), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), help="own dataset (owners)")
@click.option("--attr-width", type=int, help="attribute bytes of both datasets (default: own dataset's)")
@click.option("--label-bits", type=int, default=DEFAULT_LABEL_BITS, show_default=True)
@click.option("--ot-mode", type=click.Choice(["group", "dealer"]), default="group", show_default=True)
@click.option("--listen", help="host:port to accept the other owner on")
@click.option("--connect", help="host:port of the other owner")
@click.option("--server", "server_addr", help="host:port of the level-2 server (owners)")
@click.option("--listen-p1", help="host:port the server accepts P1 on")
@click.option("--listen-p2", help="host:port the server accepts P2 on")
@click.option("--out", type=click.Path(dir_okay=False), help="shares file to write (owners)")
@click.option("--intersection-out", type=click.Path(dir_okay=False), help="level-1 P1: matched ids file")
@click.option("--stats-out", type=click.Path(dir_okay=False), help="also write the JSON report here")
@click.option("--bandwidth-limit", help="throttle outgoing traffic, e.g. 500M or 1G bits/s")
@click.option("--concurrent", is_flag=True, help="level-2 server: run both switching sessions at once")
@click.option("--timeout", type=float, default=60.0, show_default=True, help="seconds to wait for peers")
@click.option("--test-mode", is_flag=True, help="allow --seed (shared dealer randomness; never in production)")
@click.option("--seed", type=int, help="test only: derive all randomness and the dealer from this seed")
def run(role, level, data_path, attr_width, label_bits, ot_mode, listen, connect, server_addr, listen_p1,
        listen_p2, out, intersection_out, stats_out, bandwidth_limit, concurrent, timeout, test_mode, seed):
    """Run one party of a level-1 or level-2 session over TCP."""
    if seed is not None and not test_mode:
        raise click.UsageError("--seed is only accepted together with --test-mode")
    needs_dealer = level == 1 or ot_mode == "dealer"
    if needs_dealer and seed is None:
        raise click.UsageError("level 1 and dealer OT mode need dealer randomness shared by all parties: "
                               "pass --test-mode --seed N to every party")
    ds: Dataset | None = None
    if role != "server":
        if not data_path:
            raise click.UsageError("owners need --data")
        if not out:
            raise click.UsageError("owners need --out")
        ds = read_dataset(data_path)
        attr_width = attr_width or ds.width
    elif not attr_width:
        raise click.UsageError("the server needs --attr-width")
    if level == 1 and role == "server":
        raise click.UsageError("level 1 has no server")
    if level == 1 and bool(listen) == bool(connect):
        raise click.UsageError("level 1 needs exactly one of --listen / --connect")
    if level == 2 and role != "server" and (bool(listen) == bool(connect) or not server_addr):
        raise click.UsageError("level-2 owners need --server and exactly one of --listen / --connect")
    if level == 2 and role == "server" and not (listen_p1 and listen_p2):
        raise click.UsageError("the level-2 server needs --listen-p1 and --listen-p2")
    if intersection_out and not (level == 1 and role == "p1"):
        raise click.UsageError("only level-1 P1 learns the intersection")

    rate = parse_rate(bandwidth_limit) if bandwidth_limit else None
    cfg = SessionConfig(attr_width, attr_width, label_bits, ot_mode, concurrent)
    rngs, dealer = party_sources(seed)
    rng = rngs[role]
    session = _Session(rate)
    try:
        def owner_link(peer_name):
            if listen:
                return session.accept(peer_name, listen, timeout)
            return session.connect(peer_name, connect, timeout)

        if level == 1:
            ch = owner_link("p2" if role == "p1" else "p1")
            result = (level1_p1 if role == "p1" else level1_p2)(ds, ch, rng, dealer, cfg)
        elif role == "server":
            # accept P1 first, then P2; owners connect with retries so order is harmless
            ch1 = session.accept("p1", listen_p1, timeout)
            ch2 = session.accept("p2", listen_p2, timeout)
            result = level2_server(ch1, ch2, rng, dealer, cfg)
        else:
            server = session.connect("server", server_addr, timeout)
            peer = owner_link("p2" if role == "p1" else "p1")
            fn = level2_p1 if role == "p1" else level2_p2
            result = fn(ds, peer, server, rng, dealer, cfg)
    except PROTOCOL_ERRORS as e:
        raise _Aborted(f"{type(e).__name__}: {e} ({session.context()})") from e
    finally:
        session.close()

    if result.shares is not None:
        ensure_parent(out)
        write_shares(out, result.shares)
    if level == 1 and role == "p1":
        path = intersection_out or str(Path(out).with_suffix("")) + ".ids.csv"
        ensure_parent(path)
        write_ids(path, result.intersection)
    report = result.report()
    if result.sizes is not None:
        report["n"], report["m"] = result.sizes
    text = json.dumps(report)
    if stats_out:
        ensure_parent(stats_out)
        Path(stats_out).write_text(text + "\n")
    click.echo(text)


class _Aborted(Exception):
    pass


@cli.command()
@click.argument("shares_p1", type=click.Path(exists=True, dir_okay=False))
@click.argument("shares_p2", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default="join.csv", show_default=True)
def reveal(shares_p1, shares_p2, out):
    """XOR two share files into the plaintext join."""
    a, b = read_shares(shares_p1), read_shares(shares_p2)
    if len(a) != len(b):
        raise FormatError(f"share files have {len(a)} and {len(b)} rows")
    if len(a) == 0:
        rows = []
    else:
        rows = a.reveal(b)
    ensure_parent(out)
    write_join(out, rows)
    click.echo(json.dumps({"rows": len(rows), "out": out}))


@cli.command()
@click.argument("join_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("p1_data", type=click.Path(exists=True, dir_okay=False))
@click.argument("p2_data", type=click.Path(exists=True, dir_okay=False))
def verify(join_file, p1_data, p2_data):
    """Compare a revealed join with the plaintext inner join (order-insensitive)."""
    got = join_multiset(read_join(join_file))
    want = join_multiset((u, v) for _, u, v in plain_inner_join(read_dataset(p1_data), read_dataset(p2_data)))
    if got == want:
        click.echo(f"PASS {sum(want.values())} rows")
        return EXIT_OK
    missing = sum((want - got).values())
    extra = sum((got - want).values())
    click.echo(f"FAIL {missing} expected rows missing, {extra} unexpected rows")
    return EXIT_MISMATCH


@cli.command("estimate-he")
@click.option("--n", "n", type=str, required=True, help="records per party, e.g. 65536 or 2^16")
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--bandwidth", default="1G", show_default=True, help="bits per second, e.g. 500M, 1G")
@click.option("--e", "e_ms", type=float, default=HeCostModel.e, show_default=True)
@click.option("--s", "s_ms", type=float, default=HeCostModel.s, show_default=True)
@click.option("--d", "d_ms", type=float, default=HeCostModel.d, show_default=True)
@click.option("--kg", "kg_ms", type=float, default=HeCostModel.kg, show_default=True)
@click.option("--key-size", type=int, default=HeCostModel.key_size, show_default=True)
def estimate_he_cmd(n, alpha, bandwidth, e_ms, s_ms, d_ms, kg_ms, key_size):
    """Estimated traffic and run time of a homomorphic-encryption alignment."""
    rate = parse_rate(bandwidth)
    if rate is None:
        raise click.BadParameter("needs a finite bandwidth", param_hint="--bandwidth")
    est = estimate_he(parse_size(n), alpha, rate, HeCostModel(e_ms, s_ms, d_ms, kg_ms, key_size))
    click.echo(json.dumps({"n": parse_size(n), "alpha": alpha, "bandwidth_bits_per_s": rate,
                           "comm_bytes": est.comm_bytes, "comm_mib": est.comm_mib,
                           "runtime_s": round(est.runtime_s, 3)}))


@cli.command()
@click.option("--target", type=click.Choice(sorted(bench_mod.RUNNERS)), required=True)
@click.option("--sizes", default="2^10,2^12", show_default=True, help="comma list, e.g. 2^10,2^12,4096")
@click.option("--bandwidths", default="none", show_default=True, help="comma list, e.g. none,200M,10G")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="also write the table as CSV")
def bench(target, sizes, bandwidths, seed, csv_path):
    """Time the switching network, the PSI step or full level-2 alignment."""
    size_list = [parse_size(s) for s in sizes.split(",") if s.strip()]
    rates = [parse_rate(b) for b in bandwidths.split(",") if b.strip()]
    if any(s < 2 for s in size_list):
        raise click.BadParameter("sizes must be at least 2", param_hint="--sizes")
    rows = bench_mod.run_bench(target, size_list, rates or [None], seed)
    click.echo(bench_mod.to_text(rows))
    if csv_path:
        ensure_parent(csv_path)
        Path(csv_path).write_text(bench_mod.to_csv(rows))


def _configure_logging() -> None:
    level = os.environ.get("PSALIGN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    try:
        rv = cli.main(args=argv, prog_name="psalign", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except _Aborted as e:
        click.echo(f"protocol abort: {e}", err=True)
        return EXIT_ABORT
    except PROTOCOL_ERRORS as e:
        click.echo(f"protocol abort: {type(e).__name__}: {e}", err=True)
        return EXIT_ABORT
    except (FormatError, ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
