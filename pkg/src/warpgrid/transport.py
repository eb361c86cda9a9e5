"""Node-to-node messaging: deterministic in-process channels and sockets.

Both backends guarantee exactly-once, per-(source, destination) FIFO
delivery and expose a global sends-minus-receives counter, which the GVT
protocol uses to bound in-flight messages.  The in-process backend keeps
message bodies as Python objects (payloads are immutable) and delivers on
a seeded schedule so tests replay identically; the socket backend frames
bodies through the binary codec:

    4-byte LE length | 1-byte kind tag | 4-byte LE source | 4-byte LE dest | body

A node topology file lists one `rank host:port` pair per line.
"""

from __future__ import annotations

import heapq
import socket
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .codec import decode_body, encode_body
from .vtime import INFINITY, stable_hash

KIND_TAGS = {
    "event": 1,
    "anti_event": 2,
    "gvt_control": 3,
    "termination_token": 4,
    "listener_notice": 5,
    "migration_payload": 6,
    "store_op": 7,
}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

_HEADER = struct.Struct("<IBII")  # length, kind, source, destination


@dataclass(frozen=True, slots=True)
class NodeId:
    rank: int


@dataclass(slots=True)
class WireMessage:
    kind: str
    source: int
    destination: int
    body: object
    time: float = INFINITY  # virtual-time relevance, for in-flight bounds


class TransportError(Exception):
    pass


class InProcessTransport:
    """Deterministic seeded-delay channels between ranks in one process."""

    def __init__(self, ranks: int, seed: int = 0, max_delay: int = 0):
        self.ranks = ranks
        self.seed = seed
        self.max_delay = max_delay
        self._lock = threading.Lock()
        self._queues: list[list] = [[] for _ in range(ranks)]  # heaps of (step, seq, msg)
        self._pair_step: dict[tuple[int, int], int] = {}
        self._dst_step = [0] * ranks
        self._seq = 0
        self._sent = 0
        self._received = 0

    def send(self, msg: WireMessage) -> None:
        if not (0 <= msg.destination < self.ranks):
            raise TransportError(f"unknown destination rank {msg.destination}")
        with self._lock:
            self._seq += 1
            seq = self._seq
            delay = stable_hash("delay", self.seed, msg.source, msg.destination, seq) % (self.max_delay + 1)
            step = self._dst_step[msg.destination] + 1 + delay
            pair = (msg.source, msg.destination)
            step = max(step, self._pair_step.get(pair, 0))  # FIFO per pair
            self._pair_step[pair] = step
            heapq.heappush(self._queues[msg.destination], (step, seq, msg))
            self._sent += 1

    def poll(self, rank: int) -> list[WireMessage]:
        with self._lock:
            self._dst_step[rank] += 1
            step = self._dst_step[rank]
            heap = self._queues[rank]
            out = []
            while heap and heap[0][0] <= step:
                out.append(heapq.heappop(heap)[2])
            self._received += len(out)
            return out

    def in_flight_count(self) -> int:
        with self._lock:
            return self._sent - self._received

    def pending_min_time(self) -> float:
        """Minimum virtual time over undelivered messages (GVT bound)."""
        with self._lock:
            best = INFINITY
            for heap in self._queues:
                for _, _, msg in heap:
                    if msg.time < best:
                        best = msg.time
            return best

    def counters(self) -> tuple[int, int]:
        with self._lock:
            return self._sent, self._received

    def broadcast_listener_notice(self, source: int, body: object) -> int:
        if source != 0:
            raise TransportError("listener notices originate at rank 0")
        n = 0
        for rank in range(self.ranks):
            if rank != source:
                self.send(WireMessage("listener_notice", source, rank, body))
                n += 1
        return n


# -- socket backend ---------------------------------------------------------


def encode_frame(msg: WireMessage) -> bytes:
    body = encode_body((msg.time if msg.time != INFINITY else None, msg.body))
    header = _HEADER.pack(len(body) + 9, KIND_TAGS[msg.kind], msg.source, msg.destination)
    return header + body


def decode_frame(kind_tag: int, source: int, destination: int, body: bytes) -> WireMessage:
    time_raw, payload = decode_body(body)
    return WireMessage(TAG_KINDS[kind_tag], source, destination, payload,
                       INFINITY if time_raw is None else float(time_raw))


def parse_topology(path: str | Path) -> dict[int, tuple[str, int]]:
    """Parse `rank host:port` lines into a rank table."""
    table: dict[int, tuple[str, int]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rank_text, addr = line.split()
            host, port_text = addr.rsplit(":", 1)
            table[int(rank_text)] = (host, int(port_text))
        except ValueError as exc:
            raise TransportError(f"topology line {lineno}: {exc}") from exc
    if sorted(table) != list(range(len(table))):
        raise TransportError("topology ranks must be 0..M-1 without gaps")
    return table


class SocketTransport:
    """Full-mesh stream-socket transport for one rank of a cluster.

    Each rank listens on its topology port; lower ranks dial higher ones.
    A reader thread per peer buffers inbound frames; poll() hands them to
    the node and counts them as received.
    """

    def __init__(self, rank: int, topology: dict[int, tuple[str, int]],
                 connect_timeout: float = 20.0):
        self.rank = rank
        self.topology = topology
        self.ranks = len(topology)
        self._peers: dict[int, socket.socket] = {}
        self._send_locks: dict[int, threading.Lock] = {}
        self._inbox: list[WireMessage] = []
        self._inbox_lock = threading.Lock()
        self._sent = 0
        self._received = 0
        self._count_lock = threading.Lock()
        self._readers: list[threading.Thread] = []
        self._closed = threading.Event()
        self._connect_all(connect_timeout)

    def _connect_all(self, timeout: float) -> None:
        host, port = self.topology[self.rank]
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(self.ranks)
        server.settimeout(timeout)
        expected_inbound = [r for r in self.topology if r > self.rank]
        for peer in [r for r in self.topology if r < self.rank]:
            self._peers[peer] = _dial(self.topology[peer], self.rank, timeout)
        got = 0
        while got < len(expected_inbound):
            conn, _ = server.accept()
            peer_rank = struct.unpack("<I", _read_exact(conn, 4))[0]
            self._peers[peer_rank] = conn
            got += 1
        server.close()
        for peer, conn in self._peers.items():
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.settimeout(None)  # established links block indefinitely
            self._send_locks[peer] = threading.Lock()
            t = threading.Thread(target=self._reader_loop, args=(peer, conn),
                                 name=f"wg-rx{self.rank}<{peer}", daemon=True)
            self._readers.append(t)
            t.start()

    def _reader_loop(self, peer: int, conn: socket.socket) -> None:
        try:
            while not self._closed.is_set():
                header = _read_exact(conn, 13)
                length, kind_tag, source, destination = _HEADER.unpack(header)
                body = _read_exact(conn, length - 9)
                msg = decode_frame(kind_tag, source, destination, body)
                with self._inbox_lock:
                    self._inbox.append(msg)
        except (ConnectionError, OSError):
            return

    def send(self, msg: WireMessage) -> None:
        if msg.destination == self.rank:
            with self._inbox_lock:
                self._inbox.append(msg)
            with self._count_lock:
                self._sent += 1
            return
        conn = self._peers.get(msg.destination)
        if conn is None:
            raise TransportError(f"unknown destination rank {msg.destination}")
        frame = encode_frame(msg)
        with self._send_locks[msg.destination]:
            conn.sendall(frame)
        with self._count_lock:
            self._sent += 1

    def poll(self, rank: Optional[int] = None) -> list[WireMessage]:
        with self._inbox_lock:
            out = self._inbox
            self._inbox = []
        with self._count_lock:
            self._received += len(out)
        return out

    def counters(self) -> tuple[int, int]:
        with self._count_lock:
            return self._sent, self._received

    def in_flight_count(self) -> int:
        # Meaningful only when summed across ranks by the coordinator.
        sent, received = self.counters()
        return sent - received

    def broadcast_listener_notice(self, source: int, body: object) -> int:
        if source != 0:
            raise TransportError("listener notices originate at rank 0")
        n = 0
        for rank in self.topology:
            if rank != source:
                self.send(WireMessage("listener_notice", source, rank, body))
                n += 1
        return n

    def close(self) -> None:
        self._closed.set()
        for conn in self._peers.values():
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()


def _dial(addr: tuple[str, int], my_rank: int, timeout: float) -> socket.socket:
    deadline = timeout
    last: Optional[Exception] = None
    import time as _time
    start = _time.monotonic()
    while _time.monotonic() - start < deadline:
        try:
            conn = socket.create_connection(addr, timeout=2.0)
            conn.sendall(struct.pack("<I", my_rank))
            return conn
        except OSError as exc:
            last = exc
            _time.sleep(0.05)
    raise TransportError(f"cannot reach {addr}: {last}")


def _read_exact(conn: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return bytes(buf)


def free_port() -> int:
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port
