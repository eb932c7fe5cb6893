"""Trusted-dealer correlated randomness.

A :class:`Dealer` is a deterministic function of its seed and a session
label, so the parties of a session can each ask for their half of the same
correlation, either by sharing one object in-process or by holding the same
seed in separate processes (test deployments only: whoever holds the seed sees
both halves).
"""

from __future__ import annotations

import hashlib
import os

from .crypto import RandomSource
from .ot import ReceiverPrecomputation, SenderPrecomputation, dealer_ot_setup


class Dealer:
    def __init__(self, seed: bytes | None = None):
        self.seed = seed if seed is not None else os.urandom(32)

    @classmethod
    def from_int(cls, n: int) -> "Dealer":
        return cls(hashlib.sha256(b"psalign-dealer" + n.to_bytes(16, "little")).digest())

    def source(self, label: str) -> RandomSource:
        return RandomSource(hashlib.sha256(self.seed + label.encode()).digest())

    def ot(self, label: str, batch_size: int, msg_len: int) -> tuple[SenderPrecomputation, ReceiverPrecomputation]:
        return dealer_ot_setup(batch_size, msg_len, self.source("ot/" + label))

    def vole(self, label: str, m_slots: int):
        from .oprf import vole_deal
        return vole_deal(m_slots, self.source("vole/" + label))
