"""Cost model for a homomorphic-encryption based alignment, for comparison tables.

Per-operation timings are in milliseconds: ``e`` encryption, ``s`` scalar
multiplication, ``d`` decryption and ``kg`` key generation, for a 3072-bit key.
"""

from __future__ import annotations

from dataclasses import dataclass

MIB = 1 << 20


@dataclass(frozen=True)
class HeCostModel:
    e: float = 0.25
    s: float = 0.065
    d: float = 2.38
    kg: float = 1175.16
    key_size: int = 3072  # bits

    def __post_init__(self):
        if min(self.e, self.s, self.d, self.kg, self.key_size) <= 0:
            raise ValueError("cost model constants must be positive")


@dataclass(frozen=True)
class HeEstimate:
    comm_bits: float
    delay_s: float
    runtime_s: float

    @property
    def comm_bytes(self) -> float:
        return self.comm_bits / 8

    @property
    def comm_mib(self) -> float:
        return self.comm_bytes / MIB


def estimate_he(n: int, alpha: float, bandwidth_bits_per_s: float,
                model: HeCostModel = HeCostModel()) -> HeEstimate:
    """Traffic and run time for ``n`` records per side with overlap ``alpha``.

    Traffic is two ciphertext streams of ``n (1 + 2 alpha)`` key-sized values;
    run time doubles the per-party compute plus key generation plus the
    transfer delay.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if bandwidth_bits_per_s <= 0:
        raise ValueError("bandwidth must be positive")
    comm = 2 * n * model.key_size * (1.0 + 2 * alpha)
    delay_s = comm / bandwidth_bits_per_s
    per_record = (1 + alpha) * model.e + alpha * model.s + alpha * model.d
    runtime_ms = 2 * (n * per_record + model.kg + 1000 * delay_s)
    return HeEstimate(comm, delay_s, runtime_ms / 1000)
