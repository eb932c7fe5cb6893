"""Oblivious switching network: shares of a receiver-chosen selection of the
sender's vector.

The sender masks every wire of a Benes network with random labels; the
receiver, who programmed the network with a secret random permutation
``rho1``, learns one correction per gate through OT and pushes the masked
input through the network. The output is ``u[rho1(j)] xor B[R][j]`` for the
last-column labels ``B[R]``. Revealing ``rho2 = rho1^-1 . pi`` then lets both
sides pick out shares of ``u[pi(i)]`` for any injection ``pi``.

Attributes are carried in labels of ``lanes * lane_bytes`` bytes. The network
program and the OT choice bits are shared by all lanes; lanes only widen the
labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .benes import INSTRUMENTATION, SwitchProgram, Topology, build_topology, program
from .crypto import RandomSource, ShareVector
from .dealer import Dealer
from .ot import OtMessagePair, ot_batch_receive, ot_batch_send
from .perm import Injection, Permutation, compose_rho2, random_permutation
from .runner import guarded, run_parties
from .transport import (Endpoint, MsgType, decode_indices, decode_vector, encode_indices,
                        encode_vector, memory_pair)

DEFAULT_LABEL_BITS = 128
SENDER, RECEIVER = "sender", "receiver"


class MosnError(RuntimeError):
    pass


def label_width(attr_bytes: int, label_bits: int = DEFAULT_LABEL_BITS) -> int:
    """Bytes per wire label for attributes of ``attr_bytes`` bytes."""
    if attr_bytes < 1:
        raise ValueError("attribute width must be at least one byte")
    if label_bits % 8 or label_bits < 8:
        raise ValueError("label size must be a positive multiple of 8 bits")
    lane = label_bits // 8
    return -(-attr_bytes // lane) * lane


@dataclass
class WireLabels:
    A: np.ndarray  # (cols, m, W) incoming masks
    B: np.ndarray  # (cols, m, W) outgoing masks

    @property
    def R(self) -> int:
        return self.A.shape[0] - 1

    @property
    def width(self) -> int:
        return self.A.shape[2]


def sender_labels(m: int, width: int, topology: Topology, rng: RandomSource) -> WireLabels:
    if m < 2:
        raise ValueError("the network needs m >= 2")
    if topology.n_inputs != m:
        raise ValueError("topology size does not match m")
    INSTRUMENTATION.add("labels")
    cols = topology.cols
    A = np.empty((cols, m, width), dtype=np.uint8)
    B = np.empty_like(A)
    A[0] = rng.array((m, width))
    for c in range(cols):
        if c:
            A[c][topology.wiring[c]] = B[c - 1]
        B[c] = A[c]
        j = np.concatenate([topology.gate_j0[c], topology.gate_j1[c]])
        B[c][j] = rng.array((len(j), width))
    return WireLabels(A, B)


def sender_gate_messages(labels: WireLabels, topology: Topology, gate: tuple[int, int]) -> OtMessagePair:
    col, row = gate
    try:
        k = topology.gate_index(col, row)
    except KeyError:
        raise MosnError(f"no gate at column {col}, row {row}") from None
    j0, j1 = topology.gate_j0[col][k], topology.gate_j1[col][k]
    a, b = labels.A[col], labels.B[col]
    m0 = np.concatenate([a[j0] ^ b[j0], a[j1] ^ b[j1]])
    m1 = np.concatenate([a[j0] ^ b[j1], a[j1] ^ b[j0]])
    return OtMessagePair(m0.tobytes(), m1.tobytes())


def all_gate_messages(labels: WireLabels, topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    """Both OT messages of every gate, in batch order, as ``(G, 2W)`` arrays."""
    m0s, m1s = [], []
    for c in range(topology.cols):
        j0, j1 = topology.gate_j0[c], topology.gate_j1[c]
        a, b = labels.A[c], labels.B[c]
        m0s.append(np.concatenate([a[j0] ^ b[j0], a[j1] ^ b[j1]], axis=1))
        m1s.append(np.concatenate([a[j0] ^ b[j1], a[j1] ^ b[j0]], axis=1))
    return np.concatenate(m0s), np.concatenate(m1s)


def receiver_evaluate(prog: SwitchProgram, ot_outputs: np.ndarray, masked: np.ndarray) -> np.ndarray:
    """Push the masked vector through the network, applying one correction per gate."""
    t = prog.topology
    masked = np.asarray(masked, dtype=np.uint8)
    if masked.ndim != 2 or masked.shape[0] != t.n_inputs:
        raise MosnError(f"masked vector has shape {masked.shape}, network has {t.n_inputs} inputs")
    width = masked.shape[1]
    if ot_outputs.shape != (int(t.gate_offsets[-1]), 2 * width):
        raise MosnError(f"expected {int(t.gate_offsets[-1])} OT outputs of {2 * width} bytes, "
                        f"got {ot_outputs.shape}")
    vals = masked.copy()
    for c in range(t.cols):
        if c:
            nxt = np.empty_like(vals)
            nxt[t.wiring[c]] = vals
            vals = nxt
        x = ot_outputs[t.gate_offsets[c]:t.gate_offsets[c + 1]]
        x0, x1 = x[:, :width], x[:, width:]
        sw = prog.bits[c, t.gate_row[c]][:, None]
        j0, j1 = t.gate_j0[c], t.gate_j1[c]
        v0, v1 = vals[j0], vals[j1]
        vals[j0] = np.where(sw, v1 ^ x1, v0 ^ x0)
        vals[j1] = np.where(sw, v0 ^ x0, v1 ^ x1)
    return vals


@dataclass
class MosnReceiverState:
    m: int
    width: int
    rho1: Permutation
    prog: SwitchProgram
    ot_outputs: np.ndarray
    consumed: bool = field(default=False, repr=False)


@dataclass
class MosnSenderState:
    m: int
    width: int
    labels: WireLabels
    consumed: bool = field(default=False, repr=False)


MosnOfflineState = MosnReceiverState | MosnSenderState


def mosn_offline(role: str, m: int, width: int, rng: RandomSource, channel: Endpoint, *,
                 ot_mode: str = "dealer", dealer: Dealer | None = None, session: str = "osn"):
    """Input-independent phase: programming, labels and all gate OTs.

    ``width`` is the label width in bytes (see :func:`label_width`). In dealer
    mode both parties must pass dealers with the same seed and ``session``.
    """
    topology = build_topology(m)
    n_ot = int(topology.gate_offsets[-1])
    pre_s = pre_r = None
    if ot_mode == "dealer":
        if dealer is None:
            raise ValueError("dealer OT mode needs a dealer")
        pre_s, pre_r = dealer.ot(session, n_ot, 2 * width)
    if role == RECEIVER:
        rho1 = random_permutation(m, rng)
        prog = program(topology, rho1)
        out = ot_batch_receive(prog.choice_bits(), channel, mode=ot_mode, pre=pre_r, rng=rng)
        return MosnReceiverState(m, width, rho1, prog, out)
    if role == SENDER:
        labels = sender_labels(m, width, topology, rng)
        ot_batch_send(all_gate_messages(labels, topology), channel, mode=ot_mode, pre=pre_s, rng=rng)
        return MosnSenderState(m, width, labels)
    raise ValueError(f"unknown role {role!r}")


def _take(state) -> None:
    if state.consumed:
        raise MosnError("offline state already used")
    state.consumed = True


def mosn_online(state, data, channel: Endpoint) -> ShareVector:
    """Business-data phase.

    The receiver passes its :class:`Injection` ``pi``; the sender passes its
    ``(m, w)`` uint8 vector ``U`` with ``w`` no larger than the label width.
    Both get their ``(c, w)`` share of ``(u[pi(i)])_i``.
    """
    if isinstance(state, MosnReceiverState):
        pi = data
        if not isinstance(pi, Injection):
            raise TypeError("the receiver's online input is an Injection")
        if pi.codomain_size != state.m:
            raise MosnError(f"injection codomain {pi.codomain_size} != network size {state.m}")
        _take(state)
        masked = decode_vector(channel.recv(MsgType.MASKED_VEC))
        if masked.shape[0] != state.m or masked.shape[1] > state.width:
            raise MosnError(f"masked vector shape {masked.shape} does not fit the session")
        w = masked.shape[1]
        if w < state.width:
            masked = np.concatenate([masked, np.zeros((state.m, state.width - w), np.uint8)], axis=1)
        out = receiver_evaluate(state.prog, state.ot_outputs, masked)
        rho2 = compose_rho2(pi, state.rho1)
        channel.send(MsgType.RHO2, encode_indices(rho2.map))
        return ShareVector(out[list(rho2.map), :w])
    if isinstance(state, MosnSenderState):
        U = np.asarray(data, dtype=np.uint8)
        if U.ndim != 2 or U.shape[0] != state.m or U.shape[1] > state.width or U.shape[1] < 1:
            raise MosnError(f"sender vector shape {U.shape} does not fit the session "
                            f"(m={state.m}, width<={state.width})")
        _take(state)
        w = U.shape[1]
        channel.send(MsgType.MASKED_VEC, encode_vector(U ^ state.labels.A[0][:, :w]))
        rho2 = np.asarray(decode_indices(channel.recv(MsgType.RHO2)), dtype=np.int64)
        if len(rho2) and (rho2.min() < 0 or rho2.max() >= state.m or len(set(rho2.tolist())) != len(rho2)):
            raise MosnError("receiver sent an invalid selection vector")
        return ShareVector(state.labels.B[state.labels.R][rho2, :w])
    raise TypeError("not a mosn offline state")


@dataclass
class MosnResult:
    receiver_share: ShareVector
    sender_share: ShareVector
    receiver_state: MosnReceiverState
    offline_s: float
    online_s: float
    receiver_channel: Endpoint
    sender_channel: Endpoint


def mosn_run(pi: Injection, U: np.ndarray, *, ot_mode: str = "dealer", label_bits: int = DEFAULT_LABEL_BITS,
             seed: int | None = None, channels: tuple[Endpoint, Endpoint] | None = None) -> MosnResult:
    """Both parties of one session in this process (receiver holds ``pi``, sender ``U``)."""
    U = np.asarray(U, dtype=np.uint8)
    m, w = U.shape
    width = label_width(w, label_bits)
    root = RandomSource.from_int(seed) if seed is not None else RandomSource()
    r_rng, s_rng = root.child("receiver"), root.child("sender")
    dealer = Dealer(root.bytes(32)) if ot_mode == "dealer" else None
    rch, sch = channels or memory_pair(("receiver", "sender"))
    marks = {}

    def offline_r():
        return mosn_offline(RECEIVER, m, width, r_rng, rch, ot_mode=ot_mode, dealer=dealer)

    def offline_s():
        return mosn_offline(SENDER, m, width, s_rng, sch, ot_mode=ot_mode, dealer=dealer)

    t0 = time.perf_counter()
    r_state, s_state = run_parties([guarded(offline_r, rch), guarded(offline_s, sch)])
    t1 = time.perf_counter()
    r_share, s_share = run_parties([guarded(lambda: mosn_online(r_state, pi, rch), rch),
                                    guarded(lambda: mosn_online(s_state, U, sch), sch)])
    t2 = time.perf_counter()
    marks["offline"], marks["online"] = t1 - t0, t2 - t1
    return MosnResult(r_share, s_share, r_state, marks["offline"], marks["online"], rch, sch)
