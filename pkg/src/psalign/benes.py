"""Generalized Benes network: topology, looping-algorithm programming, routing.

Layout
------
Every column of the network has ``N`` wire positions. A gate sits on two
positions ``(j0, j1)`` of one column and either passes them straight through
(bit 0) or swaps them (bit 1); positions not covered by a gate pass through
unchanged. Between column ``i-1`` and column ``i`` a fixed public wiring moves
the value on outgoing position ``j`` to incoming position ``wiring[i][j]``.

A block of size ``n >= 4`` at position offset ``off`` has an input layer of
``n // 2`` gates on ``(off+2k, off+2k+1)``. Gate output 0 feeds the upper
sub-network (size ``n // 2``, positions ``off ...``), output 1 feeds the lower
one (size ``ceil(n / 2)``, positions ``off + n // 2 ...``). For odd ``n`` the
last wire skips both outer layers and is the last wire of the lower block.
Blocks of size 2 are a single gate, blocks of size 3 are three gates (in,
middle, out). A sub-network shallower than the space between its parent's
outer layers is centred and padded with pass-through columns.

The whole network uses ``2*ceil(log2 N) - 1`` columns and ``N // 2`` rows.
"""

from __future__ import annotations

import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .perm import Permutation


class Instrumentation:
    """Process-wide work counters, read by tests to check phase separation."""

    def __init__(self):
        self._lock = threading.Lock()
        self.counts: Counter = Counter()

    def add(self, key: str, n: int = 1) -> None:
        with self._lock:
            self.counts[key] += n

    def snapshot(self) -> Counter:
        with self._lock:
            return Counter(self.counts)


INSTRUMENTATION = Instrumentation()


def ceil_log2(n: int) -> int:
    return (n - 1).bit_length()


def gate_dims(n_inputs: int) -> tuple[int, int]:
    """``(columns, rows)`` of the gate array for ``n_inputs`` wires."""
    if n_inputs < 2:
        raise ValueError(f"a switching network needs at least 2 inputs, got {n_inputs}")
    return 2 * ceil_log2(n_inputs) - 1, n_inputs // 2


def _depth(n: int) -> int:
    if n == 2:
        return 1
    if n == 3:
        return 3
    return 2 + _depth(n - n // 2)


@dataclass(frozen=True)
class Block:
    size: int
    offset: int
    col: int
    depth: int
    row: int
    children: tuple["Block", ...] = ()


@dataclass
class Topology:
    n_inputs: int
    cols: int
    rows: int
    # wiring[i] for i >= 1: outgoing position j of column i-1 -> incoming position of column i
    wiring: list
    # per column: positions and row of each gate, sorted by row
    gate_j0: list
    gate_j1: list
    gate_row: list
    used_mask: np.ndarray
    root: Block
    # flat gate order used for OT batches: column-major, row ascending
    gate_offsets: np.ndarray = field(default=None)

    @property
    def n_gates(self) -> int:
        return int(self.used_mask.sum())

    def passthrough(self, col: int) -> np.ndarray:
        covered = np.zeros(self.n_inputs, dtype=bool)
        covered[self.gate_j0[col]] = True
        covered[self.gate_j1[col]] = True
        return np.flatnonzero(~covered)

    def gate_index(self, col: int, row: int) -> int:
        k = int(np.searchsorted(self.gate_row[col], row))
        if k >= len(self.gate_row[col]) or self.gate_row[col][k] != row:
            raise KeyError(f"no gate at column {col}, row {row}")
        return k

    def connections(self):
        """Yield ``(col, out_pos, in_pos)`` for every hardwired connection."""
        for i in range(1, self.cols):
            for j1, j2 in enumerate(self.wiring[i]):
                yield i, j1, int(j2)


class _Builder:
    def __init__(self, n: int):
        self.n = n
        self.cols, self.rows = gate_dims(n)
        self.wiring = [None] + [np.arange(n) for _ in range(self.cols - 1)]
        self.gates = [[] for _ in range(self.cols)]

    def gate(self, col, row, j0, j1):
        self.gates[col].append((row, j0, j1))

    def place(self, n, off, c0, span, row) -> Block:
        d = _depth(n)
        c = c0 + (span - d) // 2
        if n == 2:
            self.gate(c, row, off, off + 1)
            return Block(n, off, c, d, row)
        if n == 3:
            self.gate(c, row, off, off + 1)
            self.gate(c + 1, row, off + 1, off + 2)
            self.gate(c + 2, row, off, off + 1)
            return Block(n, off, c, d, row)
        n1 = n // 2
        n2 = n - n1
        for k in range(n1):
            self.gate(c, row + k, off + 2 * k, off + 2 * k + 1)
            self.gate(c + d - 1, row + k, off + 2 * k, off + 2 * k + 1)
        w_in = self.wiring[c + 1]
        w_out = self.wiring[c + d - 1]
        for k in range(n1):
            w_in[off + 2 * k] = off + k
            w_in[off + 2 * k + 1] = off + n1 + k
            w_out[off + k] = off + 2 * k
            w_out[off + n1 + k] = off + 2 * k + 1
        upper = self.place(n1, off, c + 1, d - 2, row)
        lower = self.place(n2, off + n1, c + 1, d - 2, row + n1 // 2)
        return Block(n, off, c, d, row, (upper, lower))

    def finish(self, root: Block) -> Topology:
        used = np.zeros((self.cols, self.rows), dtype=bool)
        j0s, j1s, rws = [], [], []
        for col, gates in enumerate(self.gates):
            gates.sort()
            rows = np.array([g[0] for g in gates], dtype=np.int64)
            if len(set(rows.tolist())) != len(rows):
                raise AssertionError(f"row clash in column {col}")
            used[col, rows] = True
            rws.append(rows)
            j0s.append(np.array([g[1] for g in gates], dtype=np.int64))
            j1s.append(np.array([g[2] for g in gates], dtype=np.int64))
        offsets = np.concatenate([[0], np.cumsum([len(r) for r in rws])])
        for arr in self.wiring[1:] + j0s + j1s + rws:
            arr.setflags(write=False)
        used.setflags(write=False)
        return Topology(self.n, self.cols, self.rows, self.wiring, j0s, j1s, rws, used, root, offsets)


@lru_cache(maxsize=64)
def build_topology(n_inputs: int) -> Topology:
    """Public wiring and gate placement for ``n_inputs`` wires (cached, read-only)."""
    b = _Builder(n_inputs)
    cols, _ = gate_dims(n_inputs)
    root = b.place(n_inputs, 0, 0, cols, 0)
    if root.depth != cols:
        raise AssertionError("network depth does not fill the gate array")
    return b.finish(root)


@dataclass
class ProgramStats:
    steps: int = 0
    violations: int = 0
    blocks: int = 0


@dataclass
class SwitchProgram:
    topology: Topology
    bits: np.ndarray  # (cols, rows) bool, True = crossover
    stats: ProgramStats

    @property
    def n_inputs(self) -> int:
        return self.topology.n_inputs

    @property
    def used_mask(self) -> np.ndarray:
        return self.topology.used_mask

    def choice_bits(self) -> np.ndarray:
        """Gate settings flattened in OT batch order."""
        t = self.topology
        return np.concatenate([self.bits[c, t.gate_row[c]] for c in range(t.cols)])

    def dump(self) -> str:
        lines = []
        for c in range(self.topology.cols):
            chars = []
            for r in range(self.topology.rows):
                if not self.used_mask[c, r]:
                    chars.append(".")
                else:
                    chars.append("1" if self.bits[c, r] else "0")
            lines.append("".join(chars))
        return "\n".join(lines)


# settings (in, middle, out) of a 3-block, tried in this order
_THREE_SETTINGS = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


def _route3(setting) -> list[int]:
    v = [0, 1, 2]
    if setting[0]:
        v[0], v[1] = v[1], v[0]
    if setting[1]:
        v[1], v[2] = v[2], v[1]
    if setting[2]:
        v[0], v[1] = v[1], v[0]
    return v


_THREE_TABLE = {}
for _s in _THREE_SETTINGS:
    _THREE_TABLE.setdefault(tuple(_route3(_s)), _s)
assert len(_THREE_TABLE) == 6


def color_wires(p: list[int], stats: ProgramStats | None = None) -> list[int]:
    """2-colour the input wires of a block so dual constraints hold.

    ``p[k]`` is the input routed to output ``k``. Vertices are inputs; ``a`` is
    joined to its input dual ``a ^ 1`` and to ``p[k ^ 1]`` where ``p[k] == a``.
    Colour 0 means the wire goes through the upper sub-network. For odd sizes
    the unpaired input and the input feeding the unpaired output are forced
    to colour 1 (both ends of the single chain).
    """
    n = len(p)
    paired = 2 * (n // 2)
    inv = [0] * n
    for k, a in enumerate(p):
        inv[a] = k
    color = [-1] * n
    steps = 0
    violations = 0

    def paint(start, c0):
        nonlocal steps, violations
        stack = [(start, c0)]
        while stack:
            a, c = stack.pop()
            cur = color[a]
            if cur != -1:
                if cur != c:
                    violations += 1
                continue
            color[a] = c
            steps += 1
            nc = c ^ 1
            if a < paired:
                d = a ^ 1
                if color[d] == -1:
                    stack.append((d, nc))
                elif color[d] != nc:
                    violations += 1
            k = inv[a]
            if k < paired:
                b = p[k ^ 1]
                if color[b] == -1:
                    stack.append((b, nc))
                elif color[b] != nc:
                    violations += 1

    if n % 2:
        paint(n - 1, 1)
        if color[p[n - 1]] != 1:
            violations += 1
    for a in range(n):
        if color[a] == -1:
            paint(a, 0)
    if stats is not None:
        stats.steps += steps
        stats.violations += violations
    return color


def program(topology: Topology, perm: Permutation) -> SwitchProgram:
    """Set every gate so that output ``k`` carries input ``perm[k]``."""
    if len(perm) != topology.n_inputs:
        raise ValueError(f"permutation size {len(perm)} != network size {topology.n_inputs}")
    INSTRUMENTATION.add("looping")
    started = time.perf_counter_ns()
    bits = np.zeros((topology.cols, topology.rows), dtype=bool)
    stats = ProgramStats()
    work = [(topology.root, list(perm.map))]
    while work:
        block, p = work.pop()
        stats.blocks += 1
        n, c, r = block.size, block.col, block.row
        if n == 2:
            bits[c, r] = p[0] != 0
            stats.steps += 1
            continue
        if n == 3:
            s = _THREE_TABLE[tuple(p)]
            bits[c, r], bits[c + 1, r], bits[c + 2, r] = s
            stats.steps += 3
            continue
        color = color_wires(p, stats)
        n1 = n // 2
        c_out = c + block.depth - 1
        up_p = [0] * n1
        lo_p = [0] * (n - n1)
        for k in range(n1):
            a0, a1 = 2 * k, 2 * k + 1
            if color[a0] == color[a1]:
                stats.violations += 1
            bits[c, r + k] = color[a0] == 1
            o0, o1 = p[a0], p[a1]
            if color[o0] == color[o1]:
                stats.violations += 1
            if color[o0] == 0:
                bits[c_out, r + k] = False
                up_p[k], lo_p[k] = o0 >> 1, o1 >> 1
            else:
                bits[c_out, r + k] = True
                up_p[k], lo_p[k] = o1 >> 1, o0 >> 1
        if n % 2:
            lo_p[n1] = p[n - 1] >> 1
        stats.steps += 2 * n1
        upper, lower = block.children
        work.append((lower, lo_p))
        work.append((upper, up_p))
    bits.setflags(write=False)
    INSTRUMENTATION.add("looping_ns", time.perf_counter_ns() - started)
    return SwitchProgram(topology, bits, stats)


def routing(prog: SwitchProgram) -> np.ndarray:
    """Input index that ends up on each output position."""
    t = prog.topology
    vals = np.arange(t.n_inputs)
    for c in range(t.cols):
        if c:
            nxt = np.empty_like(vals)
            nxt[t.wiring[c]] = vals
            vals = nxt
        sw = prog.bits[c, t.gate_row[c]]
        j0 = t.gate_j0[c][sw]
        j1 = t.gate_j1[c][sw]
        vals[j0], vals[j1] = vals[j1], vals[j0].copy()
    return vals


def eval_plain(prog: SwitchProgram, inputs):
    """Route ``inputs`` through the programmed network without masking."""
    if len(inputs) != prog.n_inputs:
        raise ValueError(f"expected {prog.n_inputs} inputs, got {len(inputs)}")
    return [inputs[i] for i in routing(prog)]


def coloring_components(p: list[int]) -> list[tuple[str, int]]:
    """Connected components of the colouring graph as ``(kind, vertex_count)``.

    Kinds are ``"cycle"``, ``"chain"`` and ``"node"``; used to inspect the
    structure the colouring relies on.
    """
    n = len(p)
    paired = 2 * (n // 2)
    inv = [0] * n
    for k, a in enumerate(p):
        inv[a] = k

    def neighbours(a):
        out = []
        if a < paired:
            out.append(a ^ 1)
        k = inv[a]
        if k < paired:
            out.append(p[k ^ 1])
        return out

    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        stack, members, degs = [s], 0, []
        while stack:
            a = stack.pop()
            members += 1
            nb = neighbours(a)
            degs.append(len(nb))
            for b in nb:
                if not seen[b]:
                    seen[b] = True
                    stack.append(b)
        if members == 1 and degs[0] == 0:
            comps.append(("node", 1))
        elif all(d == 2 for d in degs):
            comps.append(("cycle", members))
        else:
            comps.append(("chain", members))
    return comps
