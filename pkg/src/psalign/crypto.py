"""Field arithmetic, keyed hashing and XOR sharing shared by every protocol.

GF(2^128) elements are Python ints where bit ``i`` is the coefficient of
``x^i``; the byte encoding is 16 bytes little-endian. Bulk vectors of field
elements are numpy ``(n, 2)`` uint64 arrays in the same order (low word first),
which is what ``np.frombuffer(b, "<u8").reshape(-1, 2)`` yields for a
concatenation of encoded elements.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

# x^128 + x^7 + x^2 + x + 1, low part only
_POLY_LOW = (1 << 7) | (1 << 2) | (1 << 1) | 1
_MASK128 = (1 << 128) - 1

GF_ONE = 1
BLOCK = 16

TAG_H_BASE = 0x01
TAG_H_OUT = 0x02


def gf128_mul(a: int, b: int) -> int:
    """Carry-less product of ``a`` and ``b`` reduced modulo x^128+x^7+x^2+x+1."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> 128:
            a = (a & _MASK128) ^ _POLY_LOW
    return r


def gf128_to_bytes(a: int) -> bytes:
    return a.to_bytes(BLOCK, "little")


def gf128_from_bytes(b: bytes) -> int:
    if len(b) != BLOCK:
        raise ValueError(f"field element needs {BLOCK} bytes, got {len(b)}")
    return int.from_bytes(b, "little")


def ints_to_array(values) -> np.ndarray:
    """Pack field elements (ints) into an ``(n, 2)`` uint64 array."""
    buf = b"".join(v.to_bytes(BLOCK, "little") for v in values)
    return np.frombuffer(buf, dtype="<u8").reshape(-1, 2).copy()


def array_to_ints(arr: np.ndarray) -> list[int]:
    raw = np.ascontiguousarray(arr, dtype="<u8").tobytes()
    return [int.from_bytes(raw[i:i + BLOCK], "little") for i in range(0, len(raw), BLOCK)]


class Gf128Multiplier:
    """Multiplication by a fixed field element, table driven for bulk use.

    Holds ``T[k][v] = (v * x^(8k)) * c`` for every byte position ``k`` and byte
    value ``v``; a product is then the XOR of 16 table rows.
    """

    def __init__(self, constant: int):
        self.constant = constant
        powers = []
        p = constant
        for _ in range(128):
            powers.append(p)
            p <<= 1
            if p >> 128:
                p = (p & _MASK128) ^ _POLY_LOW
        table = [[0] * 256 for _ in range(BLOCK)]
        for k in range(BLOCK):
            row = table[k]
            for v in range(1, 256):
                low = v & -v
                row[v] = row[v ^ low] ^ powers[8 * k + low.bit_length() - 1]
        self._table = table
        self._np_table = ints_to_array(x for row in table for x in row).reshape(BLOCK, 256, 2)

    def mul(self, a: int) -> int:
        r = 0
        table = self._table
        for k in range(BLOCK):
            r ^= table[k][(a >> (8 * k)) & 0xFF]
        return r

    def mul_array(self, arr: np.ndarray, chunk: int = 1 << 15) -> np.ndarray:
        """Multiply every row of an ``(n, 2)`` uint64 array by the constant."""
        arr = np.ascontiguousarray(arr, dtype="<u8")
        out = np.empty_like(arr)
        pos = np.arange(BLOCK)
        for start in range(0, len(arr), chunk):
            part = arr[start:start + chunk]
            as_bytes = part.view(np.uint8).reshape(-1, BLOCK)
            gathered = self._np_table[pos, as_bytes]  # (c, 16, 2)
            out[start:start + chunk] = np.bitwise_xor.reduce(gathered, axis=1)
        return out


def _aes_ecb(key: bytes, data: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(data) + enc.finalize()


def _mmo_block(msg: bytes) -> bytes:
    # Messages shorter than a block get 10* padding; longer ones are compressed
    # with SHA-256. Exactly-16-byte messages are used as-is.
    n = len(msg)
    if n == BLOCK:
        return msg
    if n < BLOCK:
        return msg + b"\x80" + bytes(BLOCK - n - 1)
    if n > 1 << 32:
        raise ValueError("message longer than 2^32 bytes")
    return hashlib.sha256(msg).digest()[:BLOCK]


def prf_mmo(key: bytes, msg: bytes) -> bytes:
    """Keyed Matyas-Meyer-Oseas hash: ``AES_key(block(msg)) xor block(msg)``."""
    return prf_mmo_batch(key, [msg])[0]


def prf_mmo_batch(key: bytes, msgs) -> list[bytes]:
    if len(key) != BLOCK:
        raise ValueError("PRF key must be 16 bytes")
    blocks = b"".join(_mmo_block(m) for m in msgs)
    if not blocks:
        return []
    ct = np.frombuffer(_aes_ecb(key, blocks), dtype=np.uint8)
    out = (ct ^ np.frombuffer(blocks, dtype=np.uint8)).tobytes()
    return [out[i:i + BLOCK] for i in range(0, len(out), BLOCK)]


def prf_mmo_array(key: bytes, msgs) -> np.ndarray:
    """Batch MMO returning an ``(n, 2)`` uint64 array."""
    blocks = b"".join(_mmo_block(m) for m in msgs)
    if not blocks:
        return np.zeros((0, 2), dtype="<u8")
    ct = np.frombuffer(_aes_ecb(key, blocks), dtype="<u8")
    return (ct ^ np.frombuffer(blocks, dtype="<u8")).reshape(-1, 2)


def random_oracle_to_field(domain_tag: int, msg: bytes) -> int:
    """Domain-separated hash of ``msg`` into GF(2^128)."""
    digest = hashlib.sha256(bytes([domain_tag]) + msg).digest()
    return int.from_bytes(digest[:BLOCK], "little")


def random_oracle_array(domain_tag: int, msgs) -> np.ndarray:
    prefix = bytes([domain_tag])
    buf = b"".join(hashlib.sha256(prefix + m).digest()[:BLOCK] for m in msgs)
    if not buf:
        return np.zeros((0, 2), dtype="<u8")
    return np.frombuffer(buf, dtype="<u8").reshape(-1, 2).copy()


class RandomSource:
    """Deterministic AES-256-CTR stream seeded with 32 bytes.

    A fresh OS-entropy seed is drawn when none is given. Not thread safe; give
    each party and session its own instance (see :meth:`child`).
    """

    _BUF = 1 << 16

    def __init__(self, seed: bytes | None = None):
        if seed is None:
            seed = os.urandom(32)
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        self.seed = seed
        self._enc = Cipher(algorithms.AES(seed), modes.CTR(bytes(16))).encryptor()
        self._buf = b""
        self._pos = 0

    @classmethod
    def from_int(cls, n: int) -> "RandomSource":
        return cls(hashlib.sha256(b"psalign-seed" + n.to_bytes(16, "little")).digest())

    def child(self, label: str | bytes) -> "RandomSource":
        if isinstance(label, str):
            label = label.encode()
        return RandomSource(hashlib.sha256(self.bytes(32) + label).digest())

    def bytes(self, n: int) -> bytes:
        if n > self._BUF:
            return self._enc.update(bytes(n))
        if self._pos + n > len(self._buf):
            self._buf = self._buf[self._pos:] + self._enc.update(bytes(self._BUF))
            self._pos = 0
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        return out

    def array(self, shape, dtype=np.uint8) -> np.ndarray:
        dtype = np.dtype(dtype)
        count = int(np.prod(shape))
        return np.frombuffer(self.bytes(count * dtype.itemsize), dtype=dtype).reshape(shape).copy()

    def field(self) -> int:
        return int.from_bytes(self.bytes(BLOCK), "little")

    def bits(self, n: int) -> np.ndarray:
        return (self.array((n,)) & 1).astype(bool)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        # rejection sampling on 64-bit words
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = int.from_bytes(self.bytes(8), "little")
            if v < limit:
                return v % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        p = list(range(n))
        self.shuffle(p)
        return p

    def shuffle(self, items: list) -> None:
        n = len(items)
        if n < 2:
            return
        words = np.frombuffer(self.bytes(8 * n), dtype="<u8")
        for i in range(n - 1, 0, -1):
            bound = i + 1
            limit = (1 << 64) - ((1 << 64) % bound)
            v = int(words[i])
            while v >= limit:
                v = int.from_bytes(self.bytes(8), "little")
            j = v % bound
            items[i], items[j] = items[j], items[i]


@dataclass
class ShareVector:
    """One party's XOR share of a vector of fixed-width byte strings."""

    rows: np.ndarray  # (count, width_bytes) uint8

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.uint8)
        if self.rows.ndim != 2:
            raise ValueError("share rows must form a 2-D array")

    @property
    def width_bytes(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def reveal(self, other: "ShareVector") -> np.ndarray:
        if self.rows.shape != other.rows.shape:
            raise ValueError(f"share shapes differ: {self.rows.shape} vs {other.rows.shape}")
        return self.rows ^ other.rows


def share_split(x: bytes, rng: RandomSource) -> tuple[bytes, bytes]:
    s1 = rng.bytes(len(x))
    s2 = bytes(a ^ b for a, b in zip(x, s1))
    return s1, s2


def share_split_array(x: np.ndarray, rng: RandomSource) -> tuple[np.ndarray, np.ndarray]:
    s1 = rng.array(x.shape)
    return s1, x ^ s1


def reveal(s1: bytes, s2: bytes) -> bytes:
    if len(s1) != len(s2):
        raise ValueError("shares of different length")
    return bytes(a ^ b for a, b in zip(s1, s2))
