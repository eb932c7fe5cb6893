import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psalign.benes import (INSTRUMENTATION, ProgramStats, SwitchProgram, build_topology, coloring_components,
                           eval_plain, gate_dims, program, routing)
from psalign.crypto import RandomSource
from psalign.perm import Permutation, random_permutation


def test_gate_dims():
    assert gate_dims(2) == (1, 1)
    assert gate_dims(8) == (5, 4)
    assert gate_dims(9) == (7, 4)
    with pytest.raises(ValueError):
        gate_dims(1)


def test_small_topologies():
    t2 = build_topology(2)
    assert (t2.cols, t2.rows, t2.n_gates) == (1, 1, 1)
    t8 = build_topology(8)
    assert (t8.cols, t8.rows) == (5, 4)
    assert t8.used_mask.all()  # the classic network fills every slot
    t9 = build_topology(9)
    assert (t9.cols, t9.rows) == (7, 4)
    assert t9.n_gates < 7 * 4
    # the middle of N=9 holds a 3-input block: three gates on consecutive columns
    sizes = []
    stack = [t9.root]
    while stack:
        b = stack.pop()
        sizes.append(b.size)
        stack.extend(b.children)
    assert 3 in sizes and 2 in sizes


def test_topology_wiring_is_a_bijection():
    for n in (2, 3, 5, 8, 13, 64, 100):
        t = build_topology(n)
        for c in range(1, t.cols):
            assert sorted(t.wiring[c].tolist()) == list(range(n))
        for c in range(t.cols):
            covered = np.concatenate([t.gate_j0[c], t.gate_j1[c]])
            assert len(set(covered.tolist())) == len(covered)


def test_two_input_rule():
    t = build_topology(2)
    assert program(t, Permutation([1, 0])).bits[0, 0]
    assert not program(t, Permutation([0, 1])).bits[0, 0]
    assert eval_plain(program(t, Permutation([1, 0])), ["a", "b"]) == ["b", "a"]


def test_straight_network_of_four_is_identity():
    # Traced by hand: input wiring (0,1,2,3)->(0,2,1,3) and the output wiring undoes it.
    t = build_topology(4)
    prog = SwitchProgram(t, np.zeros((t.cols, t.rows), bool), ProgramStats())
    assert eval_plain(prog, ["a", "b", "c", "d"]) == ["a", "b", "c", "d"]


def test_every_small_permutation_of_four_and_five():
    from itertools import permutations
    for n in (3, 4, 5):
        t = build_topology(n)
        for p in permutations(range(n)):
            prog = program(t, Permutation(p))
            assert routing(prog).tolist() == list(p)
            assert prog.stats.violations == 0


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 257).flatmap(lambda n: st.permutations(list(range(n)))))
def test_program_routes_any_permutation(p):
    prog = program(build_topology(len(p)), Permutation(p))
    xs = [f"x{i}" for i in range(len(p))]
    assert eval_plain(prog, xs) == [xs[p[i]] for i in range(len(p))]
    assert prog.stats.violations == 0


def test_unused_gates_stay_false():
    rng = RandomSource.from_int(3)
    for n in (9, 11, 23, 37):
        prog = program(build_topology(n), random_permutation(n, rng))
        assert not prog.bits[~prog.used_mask].any()
        assert prog.bits.shape == gate_dims(n)


def test_dump_format():
    prog = program(build_topology(9), random_permutation(9, RandomSource.from_int(4)))
    lines = prog.dump().splitlines()
    assert len(lines) == 7 and all(len(l) == 4 for l in lines)
    assert set("".join(lines)) <= set("01.")
    assert "".join(lines).count(".") == 7 * 4 - prog.topology.n_gates


def test_eval_length_mismatch():
    prog = program(build_topology(4), Permutation.identity(4))
    with pytest.raises(ValueError):
        eval_plain(prog, [1, 2, 3])
    with pytest.raises(ValueError):
        program(build_topology(4), Permutation.identity(5))


def test_coloring_graph_cycle_structure():
    rng = RandomSource.from_int(5)
    for n in (16, 64, 200):
        comps = coloring_components(random_permutation(n, rng).map)
        assert all(kind == "cycle" and size % 2 == 0 for kind, size in comps)
    for n in (15, 63, 201):
        comps = coloring_components(random_permutation(n, rng).map)
        odd = [c for c in comps if c[0] != "cycle"]
        assert len(odd) == 1 and odd[0][0] in ("chain", "node")
        assert all(size % 2 == 0 for kind, size in comps if kind == "cycle")


def test_programming_work_is_quasi_linear():
    rng = RandomSource.from_int(6)
    ratios = []
    for k in range(4, 15):
        n = 1 << k
        prog = program(build_topology(n), random_permutation(n, rng))
        ratios.append(prog.stats.steps / (n * math.ceil(math.log2(n))))
    assert max(ratios) <= 4.0
    assert max(ratios) / min(ratios) < 1.5


def test_program_counts_looping_calls():
    before = INSTRUMENTATION.snapshot()["looping"]
    program(build_topology(6), Permutation.identity(6))
    assert INSTRUMENTATION.snapshot()["looping"] == before + 1
