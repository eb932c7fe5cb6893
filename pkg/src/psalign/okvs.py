"""Random-band OKVS over GF(2^128).

Each key selects a row of the linear system: a start offset ``s`` and a
``w``-bit band pattern, both read from the keyed MMO hash of the key. Decoding
is the XOR of the encoding entries at ``s + k`` for every set bit ``k`` of the
band, so decoding is linear in the encoding vector.

Encoding sorts rows by start and runs Gaussian elimination; with rows sorted
this way no row ever grows beyond its band, which keeps elimination near
``O(n w)`` word operations. Unconstrained slots are filled with random field
elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crypto import RandomSource, array_to_ints, ints_to_array, prf_mmo_array


class OkvsEncodeFailure(RuntimeError):
    """The system for this ``r`` is singular; retry with fresh randomness."""


class DuplicateKey(ValueError):
    pass


@dataclass(frozen=True)
class OkvsParams:
    n: int
    band_width: int = 64
    expansion: float = 1.28
    max_retries: int = 16
    # fixes the encoding length directly, e.g. when decoding a received encoding
    slots: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("OKVS needs at least one key")
        if not 16 <= self.band_width <= 64:
            raise ValueError("band width must be between 16 and 64")

    @property
    def m_slots(self) -> int:
        if self.slots is not None:
            return self.slots
        return math.ceil(self.expansion * self.n) + self.band_width

    @classmethod
    def for_slots(cls, m_slots: int, band_width: int = 64) -> "OkvsParams":
        """Parameters for decoding an encoding of known length."""
        if m_slots < band_width:
            raise ValueError("encoding shorter than one band")
        return cls(1, band_width, slots=m_slots)


def okvs_rows(keys, r: bytes, params: OkvsParams) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and band patterns (uint64, bit k = slot start+k) for ``keys``."""
    h = prf_mmo_array(r, keys)
    if not len(h):
        return np.zeros(0, np.int64), np.zeros(0, np.uint64)
    w = params.band_width
    span = params.m_slots - w + 1
    start = (h[:, 0] % np.uint64(span)).astype(np.int64)
    band = h[:, 1]
    if w < 64:
        band = band & np.uint64((1 << w) - 1)
    return start, band | np.uint64(1)


def okvs_row(key: bytes, r: bytes, params: OkvsParams) -> tuple[int, int]:
    start, band = okvs_rows([key], r, params)
    return int(start[0]), int(band[0])


def okvs_encode(pairs, r: bytes, params: OkvsParams, rng: RandomSource) -> np.ndarray:
    """Encode ``(key, value)`` pairs with field-int values.

    Returns the ``(m_slots, 2)`` uint64 encoding. Raises :class:`DuplicateKey`
    for repeated keys and :class:`OkvsEncodeFailure` for a singular system.
    """
    pairs = list(pairs)
    return okvs_encode_array([k for k, _ in pairs], [v for _, v in pairs], r, params, rng)


def okvs_encode_array(keys, values, r: bytes, params: OkvsParams, rng: RandomSource) -> np.ndarray:
    """Like :func:`okvs_encode` with values as a list of ints or an ``(n, 2)`` array."""
    if isinstance(values, np.ndarray):
        values = array_to_ints(values)
    if len(keys) != len(values):
        raise ValueError("one value per key")
    if len(set(keys)) != len(keys):
        raise DuplicateKey("OKVS keys must be distinct")
    m = params.m_slots
    start, band = okvs_rows(keys, r, params)
    order = np.argsort(start, kind="stable")
    start_l = start.tolist()
    band_l = band.tolist()

    pivots: dict[int, tuple[int, int]] = {}
    for i in order.tolist():
        pos, bits, val = start_l[i], band_l[i], values[i]
        while True:
            low = (bits & -bits).bit_length() - 1
            pos += low
            bits >>= low
            hit = pivots.get(pos)
            if hit is None:
                pivots[pos] = (bits, val)
                break
            bits ^= hit[0]
            val ^= hit[1]
            if not bits:
                if val:
                    raise OkvsEncodeFailure("singular band system")
                break  # consistent duplicate equation

    # free slots keep their random values; pivot slots are overwritten below
    out = array_to_ints(rng.array((m, 2), dtype="<u8"))
    for pos in sorted(pivots, reverse=True):
        bits, val = pivots[pos]
        bits >>= 1
        q = pos + 1
        while bits:
            low = (bits & -bits).bit_length() - 1
            q += low
            bits >>= low
            val ^= out[q]
            bits >>= 1
            q += 1
        out[pos] = val
    return ints_to_array(out)


def okvs_decode(P: np.ndarray, keys, r: bytes, params: OkvsParams, chunk: int = 1 << 12) -> np.ndarray:
    """Decode every key; returns an ``(len(keys), 2)`` uint64 array."""
    m = params.m_slots
    if len(P) != m:
        raise ValueError(f"encoding has {len(P)} slots, parameters say {m}")
    start, band = okvs_rows(keys, r, params)
    w = params.band_width
    shifts = np.arange(w, dtype=np.uint64)
    out = np.zeros((len(start), 2), dtype="<u8")
    for a in range(0, len(start), chunk):
        s = start[a:a + chunk]
        bits = ((band[a:a + chunk, None] >> shifts) & np.uint64(1)).astype(bool)  # (c, w)
        gathered = P[s[:, None] + np.arange(w)]  # (c, w, 2)
        gathered[~bits] = 0
        out[a:a + chunk] = np.bitwise_xor.reduce(gathered, axis=1)
    return out


def okvs_decode_one(P: np.ndarray, key: bytes, r: bytes, params: OkvsParams) -> int:
    return array_to_ints(okvs_decode(P, [key], r, params))[0]
