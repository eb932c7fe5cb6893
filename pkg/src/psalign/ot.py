"""Batched 1-out-of-2 oblivious transfer.

Two interchangeable modes share one call shape:

``group``
    Simplest-OT over the prime-order subgroup of edwards25519. The sender
    publishes ``A = aG`` once per batch; per instance the receiver answers
    ``B = bG`` (choice 0) or ``B = A + bG`` (choice 1) and derives its key from
    ``bA``. The sender derives ``k0 = H(aB)`` and ``k1 = H(aB - aA)`` and sends
    both messages encrypted. Semi-honest security.

``dealer``
    Precomputed OT: a dealer hands the sender random pads ``(r0, r1)`` and the
    receiver a random bit ``c`` with ``r_c``. Online the receiver sends
    ``e = b xor c`` and the sender replies with ``(m0 xor r_e, m1 xor r_{1-e})``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from nacl import bindings as sodium

from .crypto import RandomSource
from .transport import Endpoint, FrameError, MsgType, decode_vector, encode_vector

POINT_BYTES = 32


class OtError(RuntimeError):
    pass


class OtMessagePair(NamedTuple):
    m0: bytes
    m1: bytes


@dataclass
class SenderPrecomputation:
    r0: np.ndarray  # (k, L) uint8
    r1: np.ndarray
    consumed: bool = field(default=False, repr=False)

    def __len__(self) -> int:
        return len(self.r0)


@dataclass
class ReceiverPrecomputation:
    c: np.ndarray  # (k,) bool
    rc: np.ndarray  # (k, L) uint8
    consumed: bool = field(default=False, repr=False)

    def __len__(self) -> int:
        return len(self.c)


def _take(pre) -> None:
    if pre.consumed:
        raise OtError("OT precomputation already used")
    pre.consumed = True


def dealer_ot_setup(batch_size: int, msg_len: int, rng: RandomSource):
    """Correlated randomness for ``batch_size`` OTs of ``msg_len``-byte messages."""
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    r0 = rng.array((batch_size, msg_len))
    r1 = rng.array((batch_size, msg_len))
    c = rng.bits(batch_size)
    rc = np.where(c[:, None], r1, r0)
    return SenderPrecomputation(r0, r1), ReceiverPrecomputation(c, rc)


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        m0, m1 = pairs
    else:
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty OT batch")
        lengths = {len(p.m0) for p in pairs} | {len(p.m1) for p in pairs}
        if len(lengths) != 1:
            raise ValueError("all OT messages in a batch must have the same length")
        m0 = np.frombuffer(b"".join(p.m0 for p in pairs), dtype=np.uint8).reshape(len(pairs), -1)
        m1 = np.frombuffer(b"".join(p.m1 for p in pairs), dtype=np.uint8).reshape(len(pairs), -1)
    if m0.shape != m1.shape or m0.ndim != 2:
        raise ValueError(f"message arrays differ in shape: {m0.shape} vs {m1.shape}")
    if len(m0) == 0:
        raise ValueError("empty OT batch")
    return np.ascontiguousarray(m0, np.uint8), np.ascontiguousarray(m1, np.uint8)


def _pack_bits(bits: np.ndarray) -> bytes:
    return struct.pack(">I", len(bits)) + np.packbits(bits.astype(np.uint8)).tobytes()


def _unpack_bits(payload: bytes) -> np.ndarray:
    (k,) = struct.unpack_from(">I", payload)
    body = np.frombuffer(payload[4:], dtype=np.uint8)
    if len(body) != (k + 7) // 8:
        raise FrameError("bit vector length mismatch")
    return np.unpackbits(body)[:k].astype(bool)


def _kdf(tag: bytes, index: int, point: bytes, length: int) -> bytes:
    h = hashlib.shake_128(tag + index.to_bytes(8, "little") + point)
    return h.digest(length)


def _random_scalar(rng: RandomSource) -> bytes:
    return sodium.crypto_core_ed25519_scalar_reduce(rng.bytes(64))


def ot_batch_send(pairs, channel: Endpoint, *, mode: str = "group",
                  pre: SenderPrecomputation | None = None, rng: RandomSource | None = None) -> None:
    """Sender side. ``pairs`` is a list of :class:`OtMessagePair` or ``(m0, m1)`` arrays."""
    m0, m1 = _as_arrays(pairs)
    k, length = m0.shape
    if mode == "dealer":
        if pre is None:
            raise ValueError("dealer mode needs sender precomputation")
        if len(pre) != k or pre.r0.shape[1] != length:
            raise ValueError("precomputation does not match the batch")
        _take(pre)
        e = _unpack_bits(channel.recv(MsgType.OT_R2S))
        if len(e) != k:
            raise OtError(f"receiver sent {len(e)} corrections for {k} instances")
        e = e[:, None]
        x0 = m0 ^ np.where(e, pre.r1, pre.r0)
        x1 = m1 ^ np.where(e, pre.r0, pre.r1)
        channel.send(MsgType.OT_S2R, encode_vector(np.concatenate([x0, x1], axis=1)))
    elif mode == "group":
        rng = rng or RandomSource()
        a = _random_scalar(rng)
        big_a = sodium.crypto_scalarmult_ed25519_base_noclamp(a)
        t = sodium.crypto_scalarmult_ed25519_noclamp(a, big_a)
        channel.send(MsgType.OT_S2R, big_a)
        payload = channel.recv(MsgType.OT_R2S)
        if len(payload) != 4 + k * POINT_BYTES or struct.unpack_from(">I", payload)[0] != k:
            raise OtError("malformed receiver points")
        out = np.empty((k, 2 * length), dtype=np.uint8)
        tag = big_a
        for i in range(k):
            b = payload[4 + i * POINT_BYTES: 4 + (i + 1) * POINT_BYTES]
            if not sodium.crypto_core_ed25519_is_valid_point(b):
                raise OtError(f"receiver point {i} is not a valid group element")
            ab = sodium.crypto_scalarmult_ed25519_noclamp(a, b)
            k0 = _kdf(tag + b, i, ab, length)
            k1 = _kdf(tag + b, i, sodium.crypto_core_ed25519_sub(ab, t), length)
            out[i, :length] = np.frombuffer(k0, np.uint8) ^ m0[i]
            out[i, length:] = np.frombuffer(k1, np.uint8) ^ m1[i]
        channel.send(MsgType.OT_S2R, encode_vector(out))
    else:
        raise ValueError(f"unknown OT mode {mode!r}")
    channel.note("ot_instances", k)


def ot_batch_receive(choices, channel: Endpoint, *, mode: str = "group",
                     pre: ReceiverPrecomputation | None = None,
                     rng: RandomSource | None = None) -> np.ndarray:
    """Receiver side; returns a ``(k, L)`` uint8 array of chosen messages."""
    b = np.asarray(choices, dtype=bool)
    k = len(b)
    if k == 0:
        raise ValueError("empty OT batch")
    if mode == "dealer":
        if pre is None:
            raise ValueError("dealer mode needs receiver precomputation")
        if len(pre) != k:
            raise ValueError("precomputation does not match the batch")
        _take(pre)
        channel.send(MsgType.OT_R2S, _pack_bits(b ^ pre.c))
        x = decode_vector(channel.recv(MsgType.OT_S2R))
        if x.shape[0] != k or x.shape[1] % 2:
            raise OtError("malformed sender ciphertexts")
        length = x.shape[1] // 2
        if length != pre.rc.shape[1]:
            raise OtError("ciphertext length does not match precomputation")
        chosen = np.where(b[:, None], x[:, length:], x[:, :length])
        result = chosen ^ pre.rc
    elif mode == "group":
        rng = rng or RandomSource()
        big_a = channel.recv(MsgType.OT_S2R)
        if len(big_a) != POINT_BYTES or not sodium.crypto_core_ed25519_is_valid_point(big_a):
            raise OtError("sender point is not a valid group element")
        points = []
        keys_src = []
        for i in range(k):
            s = _random_scalar(rng)
            p = sodium.crypto_scalarmult_ed25519_base_noclamp(s)
            if b[i]:
                p = sodium.crypto_core_ed25519_add(big_a, p)
            points.append(p)
            keys_src.append(sodium.crypto_scalarmult_ed25519_noclamp(s, big_a))
        channel.send(MsgType.OT_R2S, struct.pack(">I", k) + b"".join(points))
        x = decode_vector(channel.recv(MsgType.OT_S2R))
        if x.shape[0] != k or x.shape[1] % 2:
            raise OtError("malformed sender ciphertexts")
        length = x.shape[1] // 2
        result = np.empty((k, length), dtype=np.uint8)
        for i in range(k):
            key = np.frombuffer(_kdf(big_a + points[i], i, keys_src[i], length), np.uint8)
            ct = x[i, length:] if b[i] else x[i, :length]
            result[i] = ct ^ key
    else:
        raise ValueError(f"unknown OT mode {mode!r}")
    channel.note("ot_instances", k)
    return result
