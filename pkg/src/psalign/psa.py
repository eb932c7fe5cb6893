"""Secret-shared inner join of two ID-keyed datasets.

Level 1 (two parties, single-blinded): P1 learns the matched IDs and both
owners end with XOR shares of the joined attributes. P2 learns only the
intersection size.

Level 2 (owners plus a non-colluding server, double-blinded): the owners hash
their IDs under a key the server never sees; the server matches the hashes and
runs one switching-network session with each owner, forwarding its output
shares to the other owner. Nobody learns which IDs matched; the server learns
the sizes and the intersection size.

Row ``i`` of every output belongs to the ``i``-th matched pair, in an order
that is uniformly shuffled.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .crypto import RandomSource, prf_mmo_batch, share_split_array
from .dealer import Dealer
from .oprf import oprf_eval_seed_batch, oprf_p1, oprf_p2
from .osn import DEFAULT_LABEL_BITS, RECEIVER, SENDER, label_width, mosn_offline, mosn_online
from .perm import Injection
from .runner import guarded, run_parties
from .transport import (ChannelStats, Endpoint, FrameError, MsgType, decode_vector, encode_vector,
                        memory_pair, open_pair)

log = logging.getLogger(__name__)

MAX_ID_BYTES = 64
PRF_BYTES = 16


class ProtocolAbort(RuntimeError):
    """The protocol cannot continue safely (e.g. a hash collision)."""


@dataclass
class Dataset:
    ids: list[bytes]
    attrs: np.ndarray  # (n, width) uint8

    def __post_init__(self):
        self.ids = [bytes(i) for i in self.ids]
        self.attrs = np.asarray(self.attrs, dtype=np.uint8)
        if self.attrs.ndim != 2 or self.attrs.shape[0] != len(self.ids):
            raise ValueError("need exactly one fixed-width attribute row per id")
        if self.attrs.shape[1] < 1:
            raise ValueError("attributes must be at least one byte wide")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in dataset")
        long = [i for i in self.ids if len(i) > MAX_ID_BYTES]
        if long:
            raise ValueError(f"id longer than {MAX_ID_BYTES} bytes: {long[0][:16]!r}...")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def width(self) -> int:
        return self.attrs.shape[1]

    def shuffled(self, rng: RandomSource) -> "Dataset":
        order = rng.permutation(len(self))
        return Dataset([self.ids[i] for i in order], self.attrs[order])


@dataclass
class IndexVectors:
    J: list[int]  # into the second list
    K: list[int]  # into the first list

    @property
    def c(self) -> int:
        return len(self.J)


@dataclass
class JoinedShares:
    u: np.ndarray  # (c, u_width)
    v: np.ndarray  # (c, v_width)
    role: str = ""

    def __post_init__(self):
        if len(self.u) != len(self.v):
            raise ValueError("u and v share columns differ in length")

    def __len__(self) -> int:
        return len(self.u)

    def reveal(self, other: "JoinedShares") -> list[tuple[bytes, bytes]]:
        if self.u.shape != other.u.shape or self.v.shape != other.v.shape:
            raise ValueError("share tables have different shapes")
        u, v = self.u ^ other.u, self.v ^ other.v
        return [(bytes(a), bytes(b)) for a, b in zip(u, v)]


@dataclass
class PartyOutput:
    role: str
    shares: JoinedShares | None
    c: int
    intersection: list[bytes] | None = None
    sizes: tuple[int, int] | None = None  # (n, m), reported by the server
    offline_ms: float = 0.0
    online_ms: float = 0.0
    channels: dict[str, ChannelStats] = field(default_factory=dict)

    @property
    def bytes_sent(self) -> int:
        return sum(s.bytes_sent for s in self.channels.values())

    @property
    def bytes_received(self) -> int:
        return sum(s.bytes_received for s in self.channels.values())

    def report(self) -> dict:
        return {"role": self.role, "c": self.c, "bytes_sent": self.bytes_sent,
                "bytes_received": self.bytes_received, "online_ms": round(self.online_ms, 3),
                "offline_ms": round(self.offline_ms, 3)}


@dataclass(frozen=True)
class SessionConfig:
    """Parameters every party of a session agrees on beforehand."""

    u_width: int
    v_width: int
    label_bits: int = DEFAULT_LABEL_BITS
    ot_mode: str = "dealer"
    concurrent: bool = False  # level 2: run both switching sessions at once

    def __post_init__(self):
        if self.ot_mode not in ("dealer", "group"):
            raise ValueError(f"unknown OT mode {self.ot_mode!r}")
        label_width(self.u_width, self.label_bits)
        label_width(self.v_width, self.label_bits)


def compute_index_vectors(x_prf, y_prf, rng: RandomSource) -> IndexVectors:
    """Match equal values; ``x_prf[K[i]] == y_prf[J[i]]`` with rows shuffled."""
    y_pos = {}
    for j, y in enumerate(y_prf):
        if y in y_pos:
            raise ProtocolAbort("hash collision among the second party's values")
        y_pos[y] = j
    if len(set(x_prf)) != len(x_prf):
        raise ProtocolAbort("hash collision among the first party's values")
    pairs = [(y_pos[x], k) for k, x in enumerate(x_prf) if x in y_pos]
    rng.shuffle(pairs)
    return IndexVectors([j for j, _ in pairs], [k for _, k in pairs])


def plain_inner_join(p1: Dataset, p2: Dataset) -> list[tuple[bytes, bytes, bytes]]:
    pos = {i: k for k, i in enumerate(p2.ids)}
    return [(i, bytes(p1.attrs[k]), bytes(p2.attrs[pos[i]]))
            for k, i in enumerate(p1.ids) if i in pos]


def join_multiset(rows) -> Counter:
    """Order-insensitive form of ``(u, v)`` rows for comparisons."""
    return Counter((bytes(u), bytes(v)) for u, v in rows)


def _network_size(n: int) -> int:
    # a switching network needs two inputs; a lone record is padded with a dummy
    return max(n, 2)


def _pad_rows(a: np.ndarray, rows: int) -> np.ndarray:
    if len(a) >= rows:
        return a
    return np.concatenate([a, np.zeros((rows - len(a), a.shape[1]), np.uint8)])


def _prf_payload(values: list[bytes]) -> bytes:
    arr = np.frombuffer(b"".join(values), dtype=np.uint8).reshape(len(values), PRF_BYTES)
    return encode_vector(arr)


def _recv_prf(channel: Endpoint) -> list[bytes]:
    arr = decode_vector(channel.recv(MsgType.PRF_VEC))
    if arr.shape[1] != PRF_BYTES or arr.shape[0] < 1:
        raise FrameError(f"hash vector has shape {arr.shape}")
    return [bytes(r) for r in arr]


def _recv_shares(channel: Endpoint, c: int, width: int) -> np.ndarray:
    arr = decode_vector(channel.recv(MsgType.SHARE_VEC))
    if arr.shape != (c, width) and not (c == 0 and arr.shape[0] == 0):
        raise FrameError(f"share vector has shape {arr.shape}, expected {(c, width)}")
    return arr.reshape(c, width)


def _check_width(ds: Dataset, width: int, who: str) -> None:
    if ds.width != width:
        raise ValueError(f"{who} attributes are {ds.width} bytes wide, session says {width}")


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()
        self.offline = 0.0

    def offline_block(self, fn):
        t = time.perf_counter()
        try:
            return fn()
        finally:
            self.offline += time.perf_counter() - t

    def finish(self, out: PartyOutput) -> PartyOutput:
        total = time.perf_counter() - self.start
        out.offline_ms = 1000 * self.offline
        out.online_ms = 1000 * (total - self.offline)
        return out


# -- level 1 ---------------------------------------------------------------

def level1_p1(ds: Dataset, channel: Endpoint, rng: RandomSource, dealer: Dealer,
              cfg: SessionConfig) -> PartyOutput:
    """P1 holds ``(X, U)``; ``dealer`` supplies the VOLE (and, in dealer mode, the OTs)."""
    _check_width(ds, cfg.u_width, "P1")
    clock = _Clock()
    x_prf = oprf_p1(ds.ids, channel, rng.child("oprf"), dealer, session="vole")
    if len(set(x_prf)) != len(x_prf):
        raise ProtocolAbort("OPRF collision among P1's values")
    y_prf = _recv_prf(channel)
    m = len(y_prf)
    width = label_width(cfg.v_width, cfg.label_bits)
    state = clock.offline_block(lambda: mosn_offline(
        RECEIVER, _network_size(m), width, rng.child("osn"), channel,
        ot_mode=cfg.ot_mode, dealer=dealer, session="osn"))
    iv = compute_index_vectors(x_prf, y_prf, rng.child("match"))
    log.debug("p1: n=%d m=%d c=%d", len(ds), m, iv.c)
    v_share = mosn_online(state, Injection(iv.J, _network_size(m)), channel).rows
    u_own, u_peer = share_split_array(ds.attrs[iv.K], rng.child("split"))
    channel.send(MsgType.SHARE_VEC, encode_vector(u_peer))
    out = PartyOutput("p1", JoinedShares(u_own, v_share, "p1"), iv.c,
                      intersection=[ds.ids[k] for k in iv.K])
    out.channels["p2"] = channel.stats()
    return clock.finish(out)


def level1_p2(ds: Dataset, channel: Endpoint, rng: RandomSource, dealer: Dealer,
              cfg: SessionConfig) -> PartyOutput:
    _check_width(ds, cfg.v_width, "P2")
    clock = _Clock()
    seed = oprf_p2(channel, dealer, session="vole")
    shuffled = ds.shuffled(rng.child("shuffle"))
    channel.send(MsgType.PRF_VEC, _prf_payload(oprf_eval_seed_batch(seed, shuffled.ids)))
    M = _network_size(len(ds))
    width = label_width(cfg.v_width, cfg.label_bits)
    state = clock.offline_block(lambda: mosn_offline(
        SENDER, M, width, rng.child("osn"), channel, ot_mode=cfg.ot_mode, dealer=dealer, session="osn"))
    v_share = mosn_online(state, _pad_rows(shuffled.attrs, M), channel).rows
    u_share = _recv_shares(channel, len(v_share), cfg.u_width)
    out = PartyOutput("p2", JoinedShares(u_share, v_share, "p2"), len(v_share))
    out.channels["p1"] = channel.stats()
    return clock.finish(out)


# -- level 2 ---------------------------------------------------------------

KEY_INFO = b"psalign level-2 id key"


def agree_key(channel: Endpoint, rng: RandomSource) -> bytes:
    """Ephemeral X25519 exchange; both ends derive the same 16-byte key."""
    sk = X25519PrivateKey.from_private_bytes(rng.bytes(32))
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    channel.send(MsgType.KEYX, pk)
    peer = channel.recv(MsgType.KEYX)
    if len(peer) != 32:
        raise FrameError("key-exchange message must be 32 bytes")
    shared = sk.exchange(X25519PublicKey.from_public_bytes(peer))
    lo, hi = sorted([pk, peer])
    return HKDF(hashes.SHA256(), 16, salt=lo + hi, info=KEY_INFO).derive(shared)


def _level2_owner(role: str, ds: Dataset, peer: Endpoint, server: Endpoint, rng: RandomSource,
                  dealer: Dealer | None, cfg: SessionConfig) -> PartyOutput:
    own_width, other_width = (cfg.u_width, cfg.v_width) if role == "p1" else (cfg.v_width, cfg.u_width)
    _check_width(ds, own_width, role.upper())
    clock = _Clock()
    key = agree_key(peer, rng.child("keyx"))
    shuffled = ds.shuffled(rng.child("shuffle"))
    server.send(MsgType.PRF_VEC, _prf_payload(prf_mmo_batch(key, shuffled.ids)))
    M = _network_size(len(ds))
    session = "osn1" if role == "p1" else "osn2"
    state = clock.offline_block(lambda: mosn_offline(
        SENDER, M, label_width(own_width, cfg.label_bits), rng.child("osn"), server,
        ot_mode=cfg.ot_mode, dealer=dealer, session=session))
    own = mosn_online(state, _pad_rows(shuffled.attrs, M), server).rows
    other = _recv_shares(server, len(own), other_width)
    shares = JoinedShares(own, other, role) if role == "p1" else JoinedShares(other, own, role)
    out = PartyOutput(role, shares, len(own))
    out.channels["peer"] = peer.stats()
    out.channels["server"] = server.stats()
    return clock.finish(out)


def level2_p1(ds, peer, server, rng, dealer, cfg) -> PartyOutput:
    return _level2_owner("p1", ds, peer, server, rng, dealer, cfg)


def level2_p2(ds, peer, server, rng, dealer, cfg) -> PartyOutput:
    return _level2_owner("p2", ds, peer, server, rng, dealer, cfg)


def level2_server(ch_p1: Endpoint, ch_p2: Endpoint, rng: RandomSource, dealer: Dealer | None,
                  cfg: SessionConfig) -> PartyOutput:
    clock = _Clock()
    x_tilde = _recv_prf(ch_p1)
    y_tilde = _recv_prf(ch_p2)
    n, m = len(x_tilde), len(y_tilde)
    Mn, Mm = _network_size(n), _network_size(m)
    wu = label_width(cfg.u_width, cfg.label_bits)
    wv = label_width(cfg.v_width, cfg.label_bits)

    def off1():
        return mosn_offline(RECEIVER, Mn, wu, rng.child("osn1"), ch_p1,
                            ot_mode=cfg.ot_mode, dealer=dealer, session="osn1")

    def off2():
        return mosn_offline(RECEIVER, Mm, wv, rng.child("osn2"), ch_p2,
                            ot_mode=cfg.ot_mode, dealer=dealer, session="osn2")

    if cfg.concurrent:
        st1, st2 = clock.offline_block(lambda: run_parties([off1, off2]))
    else:
        st1 = clock.offline_block(off1)
        st2 = clock.offline_block(off2)
    iv = compute_index_vectors(x_tilde, y_tilde, rng.child("match"))
    log.debug("server: n=%d m=%d c=%d", n, m, iv.c)
    pi_u, pi_v = Injection(iv.K, Mn), Injection(iv.J, Mm)
    if cfg.concurrent:
        u_share, v_share = run_parties([lambda: mosn_online(st1, pi_u, ch_p1).rows,
                                        lambda: mosn_online(st2, pi_v, ch_p2).rows])
    else:
        u_share = mosn_online(st1, pi_u, ch_p1).rows
        v_share = mosn_online(st2, pi_v, ch_p2).rows
    ch_p2.send(MsgType.SHARE_VEC, encode_vector(u_share))
    ch_p1.send(MsgType.SHARE_VEC, encode_vector(v_share))
    out = PartyOutput("server", None, iv.c, sizes=(n, m))
    out.channels["p1"] = ch_p1.stats()
    out.channels["p2"] = ch_p2.stats()
    return clock.finish(out)


# -- in-process runners ----------------------------------------------------

ROLES = ("p1", "p2", "server")


def party_sources(seed: int | None) -> tuple[dict[str, RandomSource], Dealer]:
    """Per-role randomness and the dealer, all derived from one seed.

    Separate processes given the same seed derive the same dealer, which is
    how networked test runs share correlated randomness. Without a seed every
    source is fresh and the dealer is private to this process.
    """
    root = RandomSource.from_int(seed) if seed is not None else RandomSource()
    dealer = Dealer(root.bytes(32))
    return {role: root.child(role) for role in ROLES}, dealer


def _pair(kind: str, rate: float | None):
    if kind == "memory":
        return memory_pair()
    return open_pair(kind, rate_bits_per_s=rate)


def run_level1(p1: Dataset, p2: Dataset, *, ot_mode: str = "dealer", label_bits: int = DEFAULT_LABEL_BITS,
               seed: int | None = None, channel_kind: str = "memory",
               rate_bits_per_s: float | None = None) -> dict[str, PartyOutput]:
    cfg = SessionConfig(p1.width, p2.width, label_bits, ot_mode)
    rngs, dealer = party_sources(seed)
    a, b = _pair(channel_kind, rate_bits_per_s)
    try:
        o1, o2 = run_parties([
            guarded(lambda: level1_p1(p1, a, rngs["p1"], dealer, cfg), a),
            guarded(lambda: level1_p2(p2, b, rngs["p2"], dealer, cfg), b),
        ])
    finally:
        a.close()
        b.close()
    return {"p1": o1, "p2": o2}


def run_level2(p1: Dataset, p2: Dataset, *, ot_mode: str = "dealer", label_bits: int = DEFAULT_LABEL_BITS,
               seed: int | None = None, concurrent: bool = False, channel_kind: str = "memory",
               rate_bits_per_s: float | None = None) -> dict[str, PartyOutput]:
    cfg = SessionConfig(p1.width, p2.width, label_bits, ot_mode, concurrent)
    rngs, dealer = party_sources(seed)
    p1_p2, p2_p1 = _pair(channel_kind, rate_bits_per_s)
    p1_s, s_p1 = _pair(channel_kind, rate_bits_per_s)
    p2_s, s_p2 = _pair(channel_kind, rate_bits_per_s)
    everything = (p1_p2, p2_p1, p1_s, s_p1, p2_s, s_p2)
    try:
        o1, o2, os_ = run_parties([
            guarded(lambda: level2_p1(p1, p1_p2, p1_s, rngs["p1"], dealer, cfg), p1_p2, p1_s),
            guarded(lambda: level2_p2(p2, p2_p1, p2_s, rngs["p2"], dealer, cfg), p2_p1, p2_s),
            guarded(lambda: level2_server(s_p1, s_p2, rngs["server"], dealer, cfg), s_p1, s_p2),
        ])
    finally:
        for ch in everything:
            ch.close()
    return {"p1": o1, "p2": o2, "server": os_}


def server_aided_psi(X, Y, *, seed: int | None = None, channel_kind: str = "memory",
                     rate_bits_per_s: float | None = None) -> dict:
    """Matching part of level 2 alone: the server learns ``|X & Y|`` from keyed hashes.

    Returns the cardinality, the server's received byte count and wall time.
    """
    rngs, _ = party_sources(seed)
    p1_p2, p2_p1 = _pair(channel_kind, rate_bits_per_s)
    p1_s, s_p1 = _pair(channel_kind, rate_bits_per_s)
    p2_s, s_p2 = _pair(channel_kind, rate_bits_per_s)

    def owner(ids, peer, server, rng):
        key = agree_key(peer, rng.child("keyx"))
        ids = list(ids)
        rng.child("shuffle").shuffle(ids)
        server.send(MsgType.PRF_VEC, _prf_payload(prf_mmo_batch(key, ids)))

    def server():
        x, y = _recv_prf(s_p1), _recv_prf(s_p2)
        return compute_index_vectors(x, y, rngs["server"].child("match")).c

    t = time.perf_counter()
    try:
        _, _, c = run_parties([guarded(lambda: owner(X, p1_p2, p1_s, rngs["p1"]), p1_p2, p1_s),
                               guarded(lambda: owner(Y, p2_p1, p2_s, rngs["p2"]), p2_p1, p2_s),
                               guarded(server, s_p1, s_p2)])
    finally:
        for ch in (p1_p2, p2_p1, p1_s, s_p1, p2_s, s_p2):
            ch.close()
    elapsed = time.perf_counter() - t
    comm = sum(ch.stats().bytes_sent for ch in (p1_p2, p2_p1, p1_s, p2_s))
    return {"c": c, "comm_bytes": comm, "seconds": elapsed}
