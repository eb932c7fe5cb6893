import numpy as np
import pytest

from psalign.benes import INSTRUMENTATION, build_topology, eval_plain, program
from psalign.crypto import RandomSource
from psalign.dealer import Dealer
from psalign.osn import (RECEIVER, SENDER, MosnError, WireLabels, all_gate_messages, label_width, mosn_offline,
                         mosn_online, mosn_run, receiver_evaluate, sender_gate_messages, sender_labels)
from psalign.perm import Injection, Permutation, invert, random_permutation
from psalign.runner import run_parties
from psalign.transport import MsgType, memory_pair

W = 16


def chosen_outputs(labels, prog):
    """What the receiver would get from OT: m_b per gate, computed with both sides in hand."""
    m0, m1 = all_gate_messages(labels, prog.topology)
    return np.where(prog.choice_bits()[:, None], m1, m0)


def test_label_width_lanes():
    assert label_width(1) == 16
    assert label_width(16) == 16
    assert label_width(17) == 32
    assert label_width(5, label_bits=32) == 8
    with pytest.raises(ValueError):
        label_width(0)


def test_labels_two_inputs_and_determinism():
    t = build_topology(2)
    labels = sender_labels(2, W, t, RandomSource.from_int(1))
    assert labels.A.shape == (1, 2, W) and labels.R == 0
    again = sender_labels(2, W, t, RandomSource.from_int(1))
    assert (labels.A == again.A).all() and (labels.B == again.B).all()
    with pytest.raises(ValueError):
        sender_labels(1, W, build_topology(2), RandomSource.from_int(1))


@pytest.mark.parametrize("m", [8, 9, 37])
def test_hardwire_equalities(m):
    t = build_topology(m)
    labels = sender_labels(m, W, t, RandomSource.from_int(m))
    for col, j1, j2 in t.connections():
        assert (labels.A[col][j2] == labels.B[col - 1][j1]).all()
    for col in range(t.cols):
        p = t.passthrough(col)
        assert (labels.A[col][p] == labels.B[col][p]).all()


def test_gate_messages_identities():
    t = build_topology(4)
    zero = WireLabels(np.zeros((t.cols, 4, W), np.uint8), np.zeros((t.cols, 4, W), np.uint8))
    pair = sender_gate_messages(zero, t, (0, 0))
    assert pair.m0 == pair.m1 == bytes(2 * W)

    rng = RandomSource.from_int(2)
    A = rng.array((t.cols, 4, W))
    same = WireLabels(A, A.copy())
    pair = sender_gate_messages(same, t, (0, 1))
    a0, a1 = A[0][2], A[0][3]
    assert pair.m0 == bytes(2 * W)
    assert pair.m1 == np.concatenate([a0 ^ a1, a1 ^ a0]).tobytes()

    labels = sender_labels(4, W, t, rng)
    for col in range(t.cols):
        for k, row in enumerate(t.gate_row[col]):
            pair = sender_gate_messages(labels, t, (col, int(row)))
            j0, j1 = t.gate_j0[col][k], t.gate_j1[col][k]
            b0, b1 = labels.B[col][j0], labels.B[col][j1]
            x = np.frombuffer(pair.m0, np.uint8) ^ np.frombuffer(pair.m1, np.uint8)
            assert (x == np.concatenate([b0 ^ b1, b1 ^ b0])).all()
    t9 = build_topology(9)
    col, row = map(int, np.argwhere(~t9.used_mask)[0])
    with pytest.raises(MosnError):
        sender_gate_messages(sender_labels(9, W, t9, rng), t9, (col, row))


def test_evaluate_with_zero_labels_matches_plain_routing():
    t = build_topology(4)
    prog = program(t, Permutation.identity(4))
    zero = WireLabels(np.zeros((t.cols, 4, W), np.uint8), np.zeros((t.cols, 4, W), np.uint8))
    U = RandomSource.from_int(3).array((4, W))
    out = receiver_evaluate(prog, chosen_outputs(zero, prog), U)
    assert [r.tobytes() for r in out] == eval_plain(prog, [r.tobytes() for r in U])


def test_evaluate_two_inputs_swap():
    t = build_topology(2)
    rng = RandomSource.from_int(4)
    prog = program(t, Permutation([1, 0]))
    labels = sender_labels(2, W, t, rng)
    U = rng.array((2, W))
    out = receiver_evaluate(prog, chosen_outputs(labels, prog), U ^ labels.A[0])
    assert ((out ^ labels.B[labels.R]) == U[[1, 0]]).all()


def test_evaluate_unmasks_to_permuted_input():
    rng = RandomSource.from_int(5)
    for m in range(2, 65):
        t = build_topology(m)
        rho1 = random_permutation(m, rng)
        prog = program(t, rho1)
        labels = sender_labels(m, W, t, rng)
        U = rng.array((m, W))
        out = receiver_evaluate(prog, chosen_outputs(labels, prog), U ^ labels.A[0])
        assert ((out ^ labels.B[labels.R]) == U[list(rho1.map)]).all()


def test_evaluate_shape_errors():
    t = build_topology(4)
    prog = program(t, Permutation.identity(4))
    with pytest.raises(MosnError):
        receiver_evaluate(prog, np.zeros((6, 2 * W), np.uint8), np.zeros((3, W), np.uint8))
    with pytest.raises(MosnError):
        receiver_evaluate(prog, np.zeros((5, 2 * W), np.uint8), np.zeros((4, W), np.uint8))


def offline_pair(m, width=W, mode="dealer", seed=0):
    dealer = Dealer.from_int(seed)
    rng = RandomSource.from_int(seed)
    a, b = memory_pair()
    r, s = run_parties([
        lambda: mosn_offline(RECEIVER, m, width, rng.child("r"), a, ot_mode=mode, dealer=dealer),
        lambda: mosn_offline(SENDER, m, width, rng.child("s"), b, ot_mode=mode, dealer=dealer),
    ])
    return r, s, a, b


@pytest.mark.parametrize("m,expected", [(2, 1), (8, 20)])
def test_offline_ot_counts(m, expected):
    _, _, a, b = offline_pair(m)
    assert a.stats().counters["ot_instances"] == expected
    assert b.stats().counters["ot_instances"] == expected


def test_offline_ot_count_for_nine_inputs():
    _, _, a, _ = offline_pair(9)
    count = a.stats().counters["ot_instances"]
    assert count == build_topology(9).n_gates < 7 * 4


def online(r, s, a, b, pi, U):
    return run_parties([lambda: mosn_online(r, pi, a), lambda: mosn_online(s, U, b)])


def test_online_identity_injection():
    r, s, a, b = offline_pair(6)
    U = RandomSource.from_int(1).array((6, 10))
    x, y = online(r, s, a, b, Injection(range(6), 6), U)
    assert (x.reveal(y) == U).all()


def test_online_small_injection():
    r, s, a, b = offline_pair(4)
    U = RandomSource.from_int(2).array((4, W))
    x, y = online(r, s, a, b, Injection([3, 0], 4), U)
    assert (x.reveal(y) == U[[3, 0]]).all()
    # shares on their own are masked
    assert not (x.rows == U[[3, 0]]).all()


@pytest.mark.parametrize("mode", ["dealer", "group"])
def test_random_sessions(mode):
    rng = RandomSource.from_int(7)
    for it in range(15):
        m = 2 + rng.randbelow(60 if mode == "group" else 255)
        c = rng.randbelow(m + 1)
        pi = Injection(rng.permutation(m)[:c], m)
        U = rng.array((m, 1 + rng.randbelow(40)))
        res = mosn_run(pi, U, ot_mode=mode, seed=it)
        assert (res.receiver_share.reveal(res.sender_share) == U[list(pi.map)]).all()


def test_offline_state_single_use_and_dimensions():
    r, s, a, b = offline_pair(4)
    U = np.zeros((4, 4), np.uint8)
    online(r, s, a, b, Injection([1], 4), U)
    with pytest.raises(MosnError):
        mosn_online(r, Injection([1], 4), a)
    with pytest.raises(MosnError):
        mosn_online(s, U, b)
    r2, s2, _, _ = offline_pair(4)
    with pytest.raises(MosnError):
        mosn_online(r2, Injection([1], 5), a)
    with pytest.raises(MosnError):
        mosn_online(s2, np.zeros((5, 4), np.uint8), b)
    with pytest.raises(MosnError):
        mosn_online(s2, np.zeros((4, W + 1), np.uint8), b)


def test_online_does_no_programming_or_labelling():
    r, s, a, b = offline_pair(64)
    before = INSTRUMENTATION.snapshot()
    online(r, s, a, b, Injection(range(10), 64), np.ones((64, W), np.uint8))
    after = INSTRUMENTATION.snapshot()
    assert after["looping"] == before["looping"]
    assert after["labels"] == before["labels"]


def test_rho2_first_entry_is_uniform():
    m, runs = 8, 1600
    pi = Injection([5, 1, 2], m)
    counts = np.zeros(m)
    for seed in range(runs):
        rho1 = random_permutation(m, RandomSource.from_int(10_000 + seed))
        counts[invert(rho1)[pi[0]]] += 1
    expected = runs / m
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 24.32  # 7 degrees of freedom, p = 0.001


def test_sender_learns_only_rho2_online():
    res = mosn_run(Injection([2, 0], 3), np.arange(3, dtype=np.uint8).reshape(3, 1), seed=5)
    got = res.sender_channel.stats().frames_received
    assert got[MsgType.RHO2] == 1
    assert MsgType.MASKED_VEC not in got or got[MsgType.MASKED_VEC] == 0
    assert res.receiver_channel.stats().frames_received[MsgType.MASKED_VEC] == 1
