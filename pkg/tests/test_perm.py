from collections import Counter
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from psalign.crypto import RandomSource
from psalign.perm import (Injection, InvalidSize, Permutation, compose, compose_rho2, invert, random_permutation,
                          validate_bijection, validate_injection)


def test_random_permutation_small_cases():
    rng = RandomSource.from_int(0)
    assert random_permutation(1, rng).map == (0,)
    with pytest.raises(InvalidSize):
        random_permutation(0, rng)
    assert validate_bijection(random_permutation(100, rng).map)


def test_random_permutation_uniform_on_s3():
    rng = RandomSource.from_int(1)
    counts = Counter(random_permutation(3, rng).map for _ in range(6000))
    assert set(counts) == set(permutations(range(3)))
    assert all(abs(v - 1000) <= 150 for v in counts.values())


def test_random_permutation_reproducible():
    a = random_permutation(64, RandomSource.from_int(9))
    b = random_permutation(64, RandomSource.from_int(9))
    assert a == b


def test_invert_examples():
    assert invert(Permutation.identity(5)) == Permutation.identity(5)
    p = Permutation([2, 0, 1])
    assert invert(p).map == (1, 2, 0)
    assert compose(p, invert(p)) == Permutation.identity(3)
    q = random_permutation(128, RandomSource.from_int(2))
    assert compose(q, invert(q)) == Permutation.identity(128)


@given(st.permutations(list(range(20))))
def test_invert_is_involution(values):
    p = Permutation(values)
    assert invert(invert(p)) == p


def test_compose_rho2_examples():
    pi = Injection([3, 0], 4)
    assert compose_rho2(pi, Permutation.identity(4)) == pi
    rho1 = Permutation([2, 0, 3, 1])
    rho2 = compose_rho2(pi, rho1)
    assert rho2.map == (2, 1)
    assert all(rho1[rho2[i]] == pi[i] for i in range(2))


@given(st.data())
def test_compose_rho2_pointwise(data):
    m = data.draw(st.integers(1, 256))
    c = data.draw(st.integers(0, m))
    rho1 = Permutation(data.draw(st.permutations(list(range(m)))))
    pi = Injection(data.draw(st.permutations(list(range(m))))[:c], m)
    rho2 = compose_rho2(pi, rho1)
    assert all(rho1[rho2[i]] == pi[i] for i in range(c))


def test_compose_rho2_size_mismatch():
    with pytest.raises(ValueError):
        compose_rho2(Injection([0], 3), Permutation.identity(4))


def test_validate_injection_reports():
    class Raw:
        def __init__(self, values, m):
            self.map, self.codomain_size = values, m

    assert validate_injection(Raw([0, 1, 2], 5)).ok
    dup = validate_injection(Raw([1, 1], 3))
    assert dup.duplicates == [1] and not dup.out_of_range
    rng_ = validate_injection(Raw([4], 3))
    assert rng_.out_of_range == [4] and not rng_.ok
    with pytest.raises(ValueError):
        Injection([1, 1], 3)


def test_permutation_rejects_non_bijection():
    with pytest.raises(ValueError):
        Permutation([0, 0, 1])
    with pytest.raises(InvalidSize):
        Permutation([])
