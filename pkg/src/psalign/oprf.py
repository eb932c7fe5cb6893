"""OPRF from an OKVS and a VOLE correlation.

P1 encodes ``x -> H_B(x)`` for its inputs into ``P``, masks it with its VOLE
share ``A`` and sends ``r`` and ``A' = A xor P``. P2 folds that into its share,
``B' = B xor A' * delta``, which becomes a PRF seed:

    PRF(y) = H_out(decode(B', y) xor H_B(y) * delta)

P1 gets the same value on its own inputs as ``H_out(decode(C, x))`` because
``C = A * delta xor B`` and decoding is linear.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .crypto import TAG_H_BASE, TAG_H_OUT, Gf128Multiplier, RandomSource, random_oracle_array
from .dealer import Dealer
from .okvs import OkvsEncodeFailure, OkvsParams, okvs_decode, okvs_encode_array
from .transport import Endpoint, FrameError, MsgType

R_BYTES = 16


class OprfError(RuntimeError):
    pass


@dataclass
class VoleCorrelation:
    A: np.ndarray  # (m, 2) uint64
    B: np.ndarray
    C: np.ndarray
    delta: int

    @property
    def m_slots(self) -> int:
        return len(self.A)


def vole_deal(m_slots: int, rng: RandomSource, delta: int | None = None) -> VoleCorrelation:
    """Ideal VOLE: uniform ``A``, ``B`` and ``delta`` with ``C = A * delta xor B``."""
    if m_slots < 1:
        raise ValueError("VOLE dimension must be at least 1")
    A = rng.array((m_slots, 2), dtype="<u8")
    B = rng.array((m_slots, 2), dtype="<u8")
    if delta is None:
        delta = rng.field()
    C = Gf128Multiplier(delta).mul_array(A) ^ B
    return VoleCorrelation(A, B, C, delta)


@dataclass
class OprfSeed:
    b_prime: np.ndarray  # (m, 2) uint64
    delta: int
    r: bytes
    band_width: int = 64

    @property
    def params(self) -> OkvsParams:
        return OkvsParams.for_slots(len(self.b_prime), self.band_width)


def _h_base(items) -> np.ndarray:
    return random_oracle_array(TAG_H_BASE, items)


def _rows(arr: np.ndarray) -> list[bytes]:
    raw = np.ascontiguousarray(arr, dtype="<u8").tobytes()
    return [raw[i:i + 16] for i in range(0, len(raw), 16)]


def _h_out(values: np.ndarray) -> list[bytes]:
    return _rows(random_oracle_array(TAG_H_OUT, _rows(values)))


def oprf_eval_seed_batch(seed: OprfSeed, ys) -> list[bytes]:
    ys = list(ys)
    if not ys:
        return []
    d = okvs_decode(seed.b_prime, ys, seed.r, seed.params)
    d ^= Gf128Multiplier(seed.delta).mul_array(_h_base(ys))
    return _h_out(d)


def oprf_eval_seed(seed: OprfSeed, y: bytes) -> bytes:
    return oprf_eval_seed_batch(seed, [y])[0]


def oprf_p1(X, channel: Endpoint, rng: RandomSource, dealer: Dealer, *,
            session: str = "vole", params: OkvsParams | None = None) -> list[bytes]:
    """P1's side: returns ``PRF(x)`` for every ``x`` in ``X``, in order."""
    X = list(X)
    if not X:
        raise ValueError("OPRF input set is empty")
    if len(set(X)) != len(X):
        raise ValueError("OPRF inputs must be distinct")
    params = params or OkvsParams(len(X))
    values = _h_base(X)
    for _ in range(params.max_retries):
        r = rng.bytes(R_BYTES)
        try:
            P = okvs_encode_array(X, values, r, params, rng)
            break
        except OkvsEncodeFailure:
            continue
    else:
        raise OprfError(f"OKVS encoding failed {params.max_retries} times")
    corr = dealer.vole(session, params.m_slots)
    a_prime = corr.A ^ P
    channel.send(MsgType.OPRF_R_AND_APRIME,
                 r + struct.pack(">I", len(a_prime)) + np.ascontiguousarray(a_prime, "<u8").tobytes())
    return _h_out(okvs_decode(corr.C, X, r, params))


def oprf_p2(channel: Endpoint, dealer: Dealer, *, session: str = "vole", band_width: int = 64) -> OprfSeed:
    """P2's side: returns the PRF seed."""
    payload = channel.recv(MsgType.OPRF_R_AND_APRIME)
    if len(payload) < R_BYTES + 4:
        raise FrameError("truncated OPRF message")
    r = payload[:R_BYTES]
    (m,) = struct.unpack_from(">I", payload, R_BYTES)
    body = payload[R_BYTES + 4:]
    if len(body) != 16 * m or m < band_width:
        raise FrameError("OPRF encoding length does not match its header")
    a_prime = np.frombuffer(body, dtype="<u8").reshape(m, 2)
    corr = dealer.vole(session, m)
    b_prime = corr.B ^ Gf128Multiplier(corr.delta).mul_array(a_prime)
    return OprfSeed(b_prime, corr.delta, r, band_width)

