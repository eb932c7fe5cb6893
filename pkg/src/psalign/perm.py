"""Permutations and injections over index spaces ``[n] = {0, ..., n-1}``."""

from __future__ import annotations

from dataclasses import dataclass, field

from .crypto import RandomSource


class InvalidSize(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    map: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "map", tuple(self.map))
        if not self.map:
            raise InvalidSize("permutation needs at least one element")
        if not validate_bijection(self.map):
            raise ValueError("not a bijection on [n]")

    def __len__(self) -> int:
        return len(self.map)

    def __getitem__(self, i: int) -> int:
        return self.map[i]

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))


@dataclass(frozen=True)
class Injection:
    map: tuple[int, ...]
    codomain_size: int

    def __post_init__(self):
        object.__setattr__(self, "map", tuple(self.map))
        report = validate_injection(self)
        if not report.ok:
            raise ValueError(str(report))

    @property
    def domain_size(self) -> int:
        return len(self.map)

    def __len__(self) -> int:
        return len(self.map)

    def __getitem__(self, i: int) -> int:
        return self.map[i]


@dataclass
class InjectionReport:
    duplicates: list[int] = field(default_factory=list)
    out_of_range: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.duplicates and not self.out_of_range

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        if self.duplicates:
            parts.append(f"duplicate indices {self.duplicates[:8]}")
        if self.out_of_range:
            parts.append(f"out-of-range indices {self.out_of_range[:8]}")
        return "; ".join(parts)


def validate_injection(inj) -> InjectionReport:
    """Check distinctness and range without raising."""
    report = InjectionReport()
    seen = set()
    for v in inj.map:
        if v < 0 or v >= inj.codomain_size:
            report.out_of_range.append(v)
        elif v in seen:
            report.duplicates.append(v)
        seen.add(v)
    return report


def validate_bijection(values) -> bool:
    """True iff ``values`` is a rearrangement of ``0 .. len(values) - 1``."""
    values = list(values)
    return len(values) > 0 and sorted(values) == list(range(len(values)))


def random_permutation(n: int, rng: RandomSource) -> Permutation:
    if n < 1:
        raise InvalidSize(f"cannot sample a permutation of size {n}")
    return Permutation(rng.permutation(n))


def invert(p: Permutation) -> Permutation:
    q = [0] * len(p)
    for i, v in enumerate(p.map):
        q[v] = i
    return Permutation(q)


def compose(p: Permutation, q: Permutation) -> Permutation:
    """``(p . q)(i) = p(q(i))``."""
    if len(p) != len(q):
        raise ValueError("length mismatch")
    return Permutation(p.map[v] for v in q.map)


def compose_rho2(pi: Injection, rho1: Permutation) -> Injection:
    """Return ``rho2`` with ``rho1(rho2(i)) == pi(i)``, i.e. ``rho2 = rho1^-1 . pi``."""
    if pi.codomain_size != len(rho1):
        raise ValueError(f"injection codomain {pi.codomain_size} != permutation size {len(rho1)}")
    inv = invert(rho1).map
    return Injection(tuple(inv[v] for v in pi.map), pi.codomain_size)
