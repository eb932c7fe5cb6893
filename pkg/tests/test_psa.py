import numpy as np
import pytest

from psalign import psa
from psalign.crypto import RandomSource
from psalign.formats import generate_datasets
from psalign.psa import (Dataset, JoinedShares, ProtocolAbort, SessionConfig, compute_index_vectors,
                         join_multiset, plain_inner_join, run_level1, run_level2)
from psalign.transport import MsgType


def ds(pairs, width=1):
    ids = [i.encode() for i, _ in pairs]
    attrs = np.array([[a] * width for _, a in pairs], dtype=np.uint8).reshape(len(pairs), width)
    return Dataset(ids, attrs)


def joined(out):
    return join_multiset(out["p1"].shares.reveal(out["p2"].shares))


def expected(p1, p2):
    return join_multiset((u, v) for _, u, v in plain_inner_join(p1, p2))


RUNNERS = {"level1": run_level1, "level2": run_level2}


def test_index_vectors_small_example():
    iv = compute_index_vectors([b"p", b"q", b"r"], [b"s", b"q", b"p"], RandomSource.from_int(0))
    assert sorted(zip(iv.J, iv.K)) == [(1, 1), (2, 0)]
    assert iv.c == 2


def test_index_vectors_abort_on_collision():
    with pytest.raises(ProtocolAbort):
        compute_index_vectors([b"a"], [b"b", b"b"], RandomSource.from_int(0))
    with pytest.raises(ProtocolAbort):
        compute_index_vectors([b"a", b"a"], [b"b"], RandomSource.from_int(0))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([b"a", b"a"], np.zeros((2, 1), np.uint8))
    with pytest.raises(ValueError):
        Dataset([b"x" * 65], np.zeros((1, 1), np.uint8))
    with pytest.raises(ValueError):
        Dataset([b"a"], np.zeros((2, 1), np.uint8))
    with pytest.raises(ValueError):
        Dataset([b"a"], np.zeros((1, 0), np.uint8))


def test_joined_shares_shape_checks():
    a = JoinedShares(np.zeros((2, 3), np.uint8), np.zeros((2, 1), np.uint8))
    with pytest.raises(ValueError):
        a.reveal(JoinedShares(np.zeros((2, 2), np.uint8), np.zeros((2, 1), np.uint8)))
    with pytest.raises(ValueError):
        JoinedShares(np.zeros((2, 3), np.uint8), np.zeros((1, 1), np.uint8))


@pytest.mark.parametrize("level", sorted(RUNNERS))
def test_three_row_example(level):
    p1 = ds([("a", 1), ("b", 2), ("c", 3)])
    p2 = ds([("b", 20), ("c", 30), ("d", 40)])
    out = RUNNERS[level](p1, p2, seed=1)
    assert joined(out) == {(b"\x02", b"\x14"): 1, (b"\x03", b"\x1e"): 1}
    assert out["p1"].c == out["p2"].c == 2
    if level == "level1":
        assert sorted(out["p1"].intersection) == [b"b", b"c"]
    else:
        assert out["server"].c == 2 and out["server"].sizes == (3, 3)
        assert out["p1"].intersection is None


@pytest.mark.parametrize("level", sorted(RUNNERS))
def test_disjoint_inputs_give_empty_output(level):
    out = RUNNERS[level](ds([("a", 1), ("b", 2)]), ds([("x", 1)]), seed=2)
    assert out["p1"].c == out["p2"].c == 0
    assert len(out["p1"].shares) == len(out["p2"].shares) == 0


@pytest.mark.parametrize("level", sorted(RUNNERS))
def test_identical_inputs_and_single_rows(level):
    p = ds([(f"id{i}", i) for i in range(7)], width=3)
    out = RUNNERS[level](p, p, seed=3)
    assert joined(out) == expected(p, p)
    one = ds([("only", 9)])
    out = RUNNERS[level](one, one, seed=4)
    assert joined(out) == {(b"\x09", b"\x09"): 1}


@pytest.mark.parametrize("level", sorted(RUNNERS))
def test_group_ot_and_mixed_widths(level):
    p1, p2 = generate_datasets(40, 25, 0.5, 3, seed=5)
    p2 = Dataset(p2.ids, np.repeat(p2.attrs, 7, axis=1)[:, :20])
    out = RUNNERS[level](p1, p2, ot_mode="group", seed=6)
    assert joined(out) == expected(p1, p2)
    assert out["p1"].shares.u.shape[1] == 3 and out["p1"].shares.v.shape[1] == 20


def test_level2_concurrent_sessions():
    p1, p2 = generate_datasets(60, 90, 0.25, 4, seed=7)
    out = run_level2(p1, p2, seed=8, concurrent=True)
    assert joined(out) == expected(p1, p2)


@pytest.mark.parametrize("level", sorted(RUNNERS))
def test_thousand_rows_half_overlap(level):
    p1, p2 = generate_datasets(1024, 1024, 0.5, 8, seed=9)
    out = RUNNERS[level](p1, p2, seed=10)
    assert out["p1"].c == 512
    assert joined(out) == expected(p1, p2)


def test_shares_alone_do_not_show_the_data():
    p1, p2 = generate_datasets(64, 64, 1.0, 16, seed=11)
    out = run_level1(p1, p2, seed=12)
    plain = {bytes(r) for r in p2.attrs}
    assert not plain & {bytes(r) for r in out["p1"].shares.v}
    assert not plain & {bytes(r) for r in out["p2"].shares.v}


def test_output_order_is_shuffled_uniformly():
    p1 = ds([("a", 1), ("b", 2), ("c", 3)])
    p2 = ds([("a", 1), ("b", 2), ("c", 3)])
    firsts = []
    for seed in range(120):
        out = run_level1(p1, p2, seed=100 + seed)
        firsts.append(out["p1"].shares.reveal(out["p2"].shares)[0][0])
    counts = np.array([firsts.count(bytes([k])) for k in (1, 2, 3)])
    chi2 = ((counts - 40) ** 2 / 40).sum()
    assert chi2 < 13.82  # 2 degrees of freedom, p = 0.001


def test_level1_p2_sees_only_protocol_messages():
    p1, p2 = generate_datasets(20, 20, 0.5, 2, seed=13)
    out = run_level1(p1, p2, seed=14)
    assert set(out["p2"].channels["p1"].frames_received) <= {
        MsgType.OPRF_R_AND_APRIME, MsgType.OT_R2S, MsgType.RHO2, MsgType.SHARE_VEC}
    assert out["p2"].intersection is None


def test_level2_server_never_sees_ids():
    p1, p2 = generate_datasets(20, 20, 0.5, 2, seed=15)
    out = run_level2(p1, p2, seed=16)
    for side in ("p1", "p2"):
        got = out["server"].channels[side].frames_received
        assert set(got) <= {MsgType.PRF_VEC, MsgType.OT_S2R, MsgType.MASKED_VEC}


def test_collision_aborts(monkeypatch):
    monkeypatch.setattr(psa, "oprf_eval_seed_batch", lambda seed, ys: [bytes(16)] * len(list(ys)))
    with pytest.raises(ProtocolAbort):
        run_level1(ds([("a", 1)]), ds([("x", 1), ("y", 2)]), seed=17)


def test_width_mismatch_rejected():
    p = ds([("a", 1)])
    with pytest.raises(ValueError):
        psa.level1_p1(p, None, RandomSource.from_int(0), None, SessionConfig(2, 1))
    with pytest.raises(ValueError):
        SessionConfig(1, 1, ot_mode="carrier")


def test_server_aided_psi_cardinality():
    X = [f"x{i}".encode() for i in range(30)]
    Y = X[:12] + [f"y{i}".encode() for i in range(5)]
    res = psa.server_aided_psi(X, Y, seed=18)
    assert res["c"] == 12 and res["comm_bytes"] > 0
