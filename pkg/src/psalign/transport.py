"""Framed message channels: in-memory, TCP and bandwidth-throttled.

Wire format of one frame: 1-byte type, 4-byte big-endian payload length,
payload. Endpoints keep byte and per-type frame counters so protocol
communication can be reported exactly.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

HEADER = struct.Struct(">BI")
HEADER_SIZE = HEADER.size  # 5
MAX_PAYLOAD = (1 << 32) - 1


class MsgType(IntEnum):
    OT_R2S = 1
    OT_S2R = 2
    MASKED_VEC = 3
    RHO2 = 4
    OPRF_R_AND_APRIME = 5
    DEALER_VOLE = 6
    PRF_VEC = 7
    SHARE_VEC = 8
    KEYX = 9
    CONTROL = 10


class FrameError(ValueError):
    pass


class ChannelClosed(ConnectionError):
    pass


class UnexpectedFrame(RuntimeError):
    def __init__(self, expected, got):
        super().__init__(f"expected {expected.name} frame, got {got.name}")
        self.expected = expected
        self.got = got


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    payload: bytes

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def frame_encode(f: Frame) -> bytes:
    if len(f.payload) > MAX_PAYLOAD:
        raise FrameError("payload too large for a 32-bit length")
    return HEADER.pack(int(f.msg_type), len(f.payload)) + bytes(f.payload)


def frame_decode(buf: bytes) -> Frame:
    """Decode exactly one frame; trailing bytes are an error."""
    frame, used = frame_decode_prefix(buf)
    if used != len(buf):
        raise FrameError(f"{len(buf) - used} trailing bytes after frame")
    return frame


def frame_decode_prefix(buf: bytes) -> tuple[Frame, int]:
    if len(buf) < HEADER_SIZE:
        raise FrameError("truncated frame header")
    t, length = HEADER.unpack_from(buf)
    try:
        mt = MsgType(t)
    except ValueError:
        raise FrameError(f"unknown message type {t}") from None
    end = HEADER_SIZE + length
    if len(buf) < end:
        raise FrameError(f"truncated payload: need {length}, have {len(buf) - HEADER_SIZE}")
    return Frame(mt, bytes(buf[HEADER_SIZE:end])), end


@dataclass
class ChannelStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    frames_sent: Counter = field(default_factory=Counter)
    frames_received: Counter = field(default_factory=Counter)
    # protocol-level annotations, e.g. number of OT instances run on this channel
    counters: Counter = field(default_factory=Counter)

    @property
    def frames_by_type(self) -> Counter:
        return self.frames_sent + self.frames_received

    def copy(self) -> "ChannelStats":
        return ChannelStats(self.bytes_sent, self.bytes_received, Counter(self.frames_sent),
                            Counter(self.frames_received), Counter(self.counters))

    def __sub__(self, other: "ChannelStats") -> "ChannelStats":
        return ChannelStats(self.bytes_sent - other.bytes_sent,
                            self.bytes_received - other.bytes_received,
                            self.frames_sent - other.frames_sent,
                            self.frames_received - other.frames_received,
                            self.counters - other.counters)


class Endpoint:
    """One side of a reliable, ordered, bidirectional frame channel."""

    def __init__(self, name: str = ""):
        self.name = name
        self._stats = ChannelStats()
        self._lock = threading.Lock()
        # received frame types in arrival order, for transcript checks
        self.transcript: list[MsgType] = []

    def _send_frame(self, frame: Frame) -> None:
        raise NotImplementedError

    def _recv_frame(self) -> Frame:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send(self, msg_type: MsgType, payload: bytes = b"") -> None:
        frame = Frame(MsgType(msg_type), bytes(payload))
        if len(frame.payload) > MAX_PAYLOAD:
            raise FrameError("payload too large for a 32-bit length")
        self._send_frame(frame)
        with self._lock:
            self._stats.bytes_sent += frame.wire_size
            self._stats.frames_sent[frame.msg_type] += 1

    def recv_frame(self) -> Frame:
        frame = self._recv_frame()
        with self._lock:
            self._stats.bytes_received += frame.wire_size
            self._stats.frames_received[frame.msg_type] += 1
            self.transcript.append(frame.msg_type)
        return frame

    def recv(self, expected: MsgType) -> bytes:
        frame = self.recv_frame()
        if frame.msg_type != expected:
            raise UnexpectedFrame(expected, frame.msg_type)
        return frame.payload

    def note(self, key: str, n: int = 1) -> None:
        with self._lock:
            self._stats.counters[key] += n

    def stats(self) -> ChannelStats:
        with self._lock:
            return self._stats.copy()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_CLOSED = object()


class MemoryEndpoint(Endpoint):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, name: str = "", timeout: float | None = 600.0):
        super().__init__(name)
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout
        self._closed = False

    def _send_frame(self, frame: Frame) -> None:
        if self._closed:
            raise ChannelClosed(f"{self.name or 'endpoint'} is closed")
        self._outbox.put(frame)

    def _recv_frame(self) -> Frame:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelClosed(f"{self.name or 'endpoint'}: receive timed out") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise ChannelClosed(f"{self.name or 'endpoint'}: peer closed the channel")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


class TcpEndpoint(Endpoint):
    def __init__(self, sock: socket.socket, name: str = ""):
        super().__init__(name)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._send_lock = threading.Lock()

    def _send_frame(self, frame: Frame) -> None:
        header = HEADER.pack(int(frame.msg_type), len(frame.payload))
        with self._send_lock:
            try:
                self._sock.sendall(header)
                if frame.payload:
                    self._sock.sendall(frame.payload)
            except OSError as e:
                raise ChannelClosed(str(e)) from e

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self._sock.recv_into(view[got:], n - got)
            except OSError as e:
                raise ChannelClosed(str(e)) from e
            if k == 0:
                raise ChannelClosed("peer closed the connection")
            got += k
        return bytes(buf)

    def _recv_frame(self) -> Frame:
        t, length = HEADER.unpack(self._read_exact(HEADER_SIZE))
        try:
            mt = MsgType(t)
        except ValueError:
            raise FrameError(f"unknown message type {t}") from None
        return Frame(mt, self._read_exact(length) if length else b"")

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TokenBucket:
    """Bit-rate limiter; a send blocks until the bucket covers its size.

    The bucket may go into debt for frames larger than its capacity, in which
    case the sender sleeps until the debt is repaid at the configured rate.
    """

    def __init__(self, rate_bits_per_s: float, burst_s: float = 0.01):
        if rate_bits_per_s <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate_bits_per_s)
        self.capacity = self.rate * burst_s
        self.tokens = self.capacity
        self.stamp = time.monotonic()
        self._lock = threading.Lock()

    def consume(self, bits: int) -> None:
        with self._lock:
            now = time.monotonic()
            self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now
            self.tokens -= bits
            wait = -self.tokens / self.rate if self.tokens < 0 else 0.0
        if wait > 0:
            time.sleep(wait)


class ThrottledEndpoint(Endpoint):
    """Wraps another endpoint and rate-limits its outgoing frames."""

    def __init__(self, inner: Endpoint, rate_bits_per_s: float):
        super().__init__(inner.name)
        self.inner = inner
        self.bucket = TokenBucket(rate_bits_per_s)

    def _send_frame(self, frame: Frame) -> None:
        self.bucket.consume(8 * frame.wire_size)
        self.inner._send_frame(frame)

    def _recv_frame(self) -> Frame:
        return self.inner._recv_frame()

    def close(self) -> None:
        self.inner.close()


def memory_pair(names=("a", "b"), timeout: float | None = 600.0) -> tuple[MemoryEndpoint, MemoryEndpoint]:
    q1, q2 = queue.Queue(), queue.Queue()
    return MemoryEndpoint(q1, q2, names[0], timeout), MemoryEndpoint(q2, q1, names[1], timeout)


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


class TcpListener:
    def __init__(self, addr: str, backlog: int = 4):
        host, port = parse_address(addr)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(backlog)

    @property
    def address(self) -> str:
        host, port = self.sock.getsockname()[:2]
        return f"{host}:{port}"

    def accept(self, name: str = "", timeout: float | None = None) -> TcpEndpoint:
        self.sock.settimeout(timeout)
        conn, _ = self.sock.accept()
        conn.settimeout(None)
        return TcpEndpoint(conn, name)

    def close(self) -> None:
        self.sock.close()


def tcp_connect(addr: str, name: str = "", retry_s: float = 10.0) -> TcpEndpoint:
    host, port = parse_address(addr)
    deadline = time.monotonic() + retry_s
    while True:
        try:
            return TcpEndpoint(socket.create_connection((host, port)), name)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def open_pair(kind: str = "memory", address: str = "127.0.0.1:0",
              rate_bits_per_s: float | None = None) -> tuple[Endpoint, Endpoint]:
    """Open two connected endpoints of the given kind in this process.

    ``kind`` is ``"memory"``, ``"tcp"`` (loopback listener on ``address``) or
    ``"throttled"`` (memory pair with both directions limited to
    ``rate_bits_per_s``).
    """
    if kind == "memory":
        return memory_pair()
    if kind == "throttled":
        if not rate_bits_per_s or rate_bits_per_s <= 0:
            raise ValueError("throttled channels need a positive rate")
        a, b = memory_pair()
        return ThrottledEndpoint(a, rate_bits_per_s), ThrottledEndpoint(b, rate_bits_per_s)
    if kind == "tcp":
        listener = TcpListener(address)
        try:
            result = {}
            t = threading.Thread(target=lambda: result.setdefault("ep", listener.accept("a")))
            t.start()
            b = tcp_connect(listener.address, "b")
            t.join()
            return result["ep"], b
        finally:
            listener.close()
    raise ValueError(f"unknown channel kind {kind!r}")


def stats(endpoint: Endpoint) -> ChannelStats:
    return endpoint.stats()


# Length-prefixed vectors: 4-byte count, 4-byte item width, raw rows.
_VEC = struct.Struct(">II")


def encode_vector(rows: np.ndarray) -> bytes:
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    if rows.ndim != 2:
        raise ValueError("vector payload must be 2-D")
    return _VEC.pack(rows.shape[0], rows.shape[1]) + rows.tobytes()


def decode_vector(payload: bytes) -> np.ndarray:
    if len(payload) < _VEC.size:
        raise FrameError("truncated vector header")
    count, width = _VEC.unpack_from(payload)
    body = payload[_VEC.size:]
    if len(body) != count * width:
        raise FrameError(f"vector body has {len(body)} bytes, header says {count}x{width}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, width).copy()


def encode_indices(idx) -> bytes:
    arr = np.asarray(idx, dtype=">u4")
    return _VEC.pack(len(arr), 4) + arr.tobytes()


def decode_indices(payload: bytes) -> list[int]:
    rows = decode_vector(payload)
    if rows.shape[1] != 4 and rows.shape[0]:
        raise FrameError("index vector items must be 4 bytes")
    return np.frombuffer(rows.tobytes(), dtype=">u4").astype(np.int64).tolist()
