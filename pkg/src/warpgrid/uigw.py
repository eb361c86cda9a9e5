"""Operator gateway: control protocol and telemetry over one socket.

Serves HTTP on a single port: plain requests receive the panel's static
assets (a built frontend directory when available, otherwise a minimal
landing page), and WebSocket upgrades join the telemetry stream.  Each
connected client receives a versioned hello, a full snapshot, and then a
delta plus a metrics frame at every GVT round; commands are forwarded to
the listener and answered with reply frames.

Telemetry exposes only state at the deferred commit horizon: that state
can never be contradicted later, because injections below the horizon are
rejected and rollback cannot reach it.  Frames carry a strictly
increasing epoch; deltas compose exactly to the next snapshot.

Wire format: JSON, one frame per WebSocket text message, newline
terminated.  Commands: {"cmd":"pause"|"resume"|"status"|"shutdown"} and
{"cmd":"inject","events":[{"receiver":...,"time":...,"kind":...}]}.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import socket
import struct
import threading
from pathlib import Path
from typing import Optional

from .listener import CommandError, Listener, parse_command
from .runner import Session
from .vtime import INFINITY, EventKey

log = logging.getLogger("warpgrid.uigw")

PROTOCOL_VERSION = 1
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>warpgrid</title></head>
<body><h1>warpgrid gateway</h1>
<p>No panel build found. Connect a WebSocket client to this port
(path /ws) to receive telemetry frames, or set WARPGRID_PANEL to a
directory of built panel assets.</p></body></html>
"""


def _ws_accept(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _encode_text_frame(payload: bytes) -> bytes:
    header = bytearray([0x81])
    n = len(payload)
    if n < 126:
        header.append(n)
    elif n < 65536:
        header.append(126)
        header += struct.pack(">H", n)
    else:
        header.append(127)
        header += struct.pack(">Q", n)
    return bytes(header) + payload


def _read_frame(conn: socket.socket) -> Optional[bytes]:
    """One client frame; None on close.  Client frames are always masked."""
    head = _recv_exact(conn, 2)
    if head is None:
        return None
    opcode = head[0] & 0x0F
    masked = head[1] & 0x80
    length = head[1] & 0x7F
    if length == 126:
        ext = _recv_exact(conn, 2)
        if ext is None:
            return None
        length = struct.unpack(">H", ext)[0]
    elif length == 127:
        ext = _recv_exact(conn, 8)
        if ext is None:
            return None
        length = struct.unpack(">Q", ext)[0]
    mask = _recv_exact(conn, 4) if masked else b"\x00" * 4
    if mask is None:
        return None
    body = _recv_exact(conn, length) if length else b""
    if body is None:
        return None
    data = bytes(b ^ mask[i % 4] for i, b in enumerate(body))
    if opcode == 0x8:  # close
        return None
    if opcode == 0x9:  # ping -> pong
        try:
            conn.sendall(bytes([0x8A, len(data)]) + data)
        except OSError:
            return None
        return b""
    if opcode in (0x1, 0x2):
        return data
    return b""


def _recv_exact(conn: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = conn.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class _Client:
    def __init__(self, conn: socket.socket, addr):
        self.conn = conn
        self.addr = addr
        self.send_lock = threading.Lock()
        self.alive = True

    def send_frame(self, obj: dict) -> bool:
        data = (json.dumps(obj, separators=(",", ":")) + "\n").encode()
        try:
            with self.send_lock:
                self.conn.sendall(_encode_text_frame(data))
            return True
        except OSError:
            self.alive = False
            return False


class Gateway:
    """Telemetry/control server bound to one running session."""

    def __init__(self, session: Session, host: str, port: int,
                 panel_dir: Optional[str] = None):
        self.session = session
        self.listener = Listener(session)
        self.panel_dir = panel_dir or os.environ.get("WARPGRID_PANEL")
        if self.panel_dir is None and Path("frontend/dist").is_dir():
            self.panel_dir = "frontend"  # built panel in the dev layout
        # index.html sits next to dist/ in the dev layout
        self.epoch = 0
        self.epoch_lock = threading.Lock()
        self.clients: list[_Client] = []
        self.clients_lock = threading.Lock()
        self.shutdown_requested = False
        self._last_states: dict[str, dict] = {}
        self._last_committed = 0
        self._closed = threading.Event()
        self.server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.server.bind((host, port))
        self.server.listen(8)
        self.port = self.server.getsockname()[1]
        self.listener.open_channel()
        session.on_round = self._on_round
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name="wg-gateway", daemon=True)
        self._accept_thread.start()

    # -- frame building -------------------------------------------------------

    def _next_epoch(self) -> int:
        with self.epoch_lock:
            self.epoch += 1
            return self.epoch

    def _gvt_field(self):
        g = self.session.gvt_value
        return None if g == INFINITY else g

    def entity_states(self) -> dict[str, dict]:
        """Roster entity views at the commit horizon."""
        node = self.session.nodes[0]
        at = EventKey(int(self.session.commit_time), "", "", 0)
        out = {}
        for name, profile in node.manager.profiles.items():
            st = node.manager.store.entity_state_at(name, at)
            if st is None:
                continue
            out[name] = {
                "name": name,
                "side": st.side,
                "type": st.entity_type,
                "pos": [st.position.x, st.position.y, st.position.z],
                "alive": st.alive,
            }
        return out

    def snapshot_frame(self) -> dict:
        states = self.entity_states()
        self._last_states = states
        return {
            "type": "snapshot",
            "epoch": self._next_epoch(),
            "gvt": self._gvt_field(),
            "paused": self.session._paused,
            "entities": [states[k] for k in sorted(states)],
        }

    def delta_frame(self) -> Optional[dict]:
        states = self.entity_states()
        changed = [states[k] for k in sorted(states)
                   if self._last_states.get(k) != states[k]]
        self._last_states = states
        if not changed:
            return None
        return {
            "type": "delta",
            "epoch": self._next_epoch(),
            "gvt": self._gvt_field(),
            "paused": self.session._paused,
            "entities": changed,
        }

    def metrics_frame(self) -> dict:
        committed = sum(sum(node.commit_matrix.values()) for node in self.session.nodes)
        rollbacks = sum(sum(node.stats.rollback_calls) for node in self.session.nodes)
        per_worker = {f"{n.node_id}.{w}": c for n in self.session.nodes
                      for w, c in enumerate(n.stats.processed)}
        rate = committed - self._last_committed
        self._last_committed = committed
        return {
            "type": "metrics",
            "epoch": self._next_epoch(),
            "gvt": self._gvt_field(),
            "committed": committed,
            "rollbacks": rollbacks,
            "events_delta": rate,
            "per_worker": per_worker,
            "alive": self.session.alive_counts(),
            "paused": self.session._paused,
        }

    # -- broadcasting ------------------------------------------------------------

    def _on_round(self, rnd) -> None:
        with self.clients_lock:
            clients = list(self.clients)
        if not clients:
            return
        delta = self.delta_frame()
        metrics = self.metrics_frame()
        for frame in ([delta] if delta else []) + [metrics]:
            self._broadcast(frame, clients)

    def _broadcast(self, frame: dict, clients) -> None:
        dead = [c for c in clients if not c.send_frame(frame)]
        if dead:
            with self.clients_lock:
                for c in dead:
                    if c in self.clients:
                        self.clients.remove(c)

    # -- connection handling ----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, addr = self.server.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(conn, addr),
                             daemon=True).start()

    def _serve_connection(self, conn: socket.socket, addr) -> None:
        try:
            request = self._read_http_request(conn)
            if request is None:
                conn.close()
                return
            headers, path = request
            if headers.get("upgrade", "").lower() == "websocket":
                self._serve_websocket(conn, addr, headers)
            else:
                self._serve_static(conn, path)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _read_http_request(conn: socket.socket):
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(4096)
            if not chunk:
                return None
            data += chunk
            if len(data) > 65536:
                return None
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head.split("\r\n")
        try:
            path = lines[0].split()[1]
        except IndexError:
            return None
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, _, v = line.partition(":")
                headers[k.strip().lower()] = v.strip()
        return headers, path

    def _serve_websocket(self, conn: socket.socket, addr, headers: dict) -> None:
        key = headers.get("sec-websocket-key")
        if not key:
            return
        response = ("HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                    f"Sec-WebSocket-Accept: {_ws_accept(key)}\r\n\r\n")
        conn.sendall(response.encode())
        client = _Client(conn, addr)
        client.send_frame({
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "epoch": self._next_epoch(),
            "map_radius": self.session.config.scenario.map_radius,
            "roster": len(self.session.config.scenario.roster),
        })
        client.send_frame(self.snapshot_frame())
        client.send_frame(self.metrics_frame())
        with self.clients_lock:
            self.clients.append(client)
        while client.alive and not self._closed.is_set():
            data = _read_frame(conn)
            if data is None:
                break
            if not data:
                continue
            self._handle_command(client, data)
        with self.clients_lock:
            if client in self.clients:
                self.clients.remove(client)

    def _handle_command(self, client: _Client, data: bytes) -> None:
        try:
            cmd = parse_command(data.decode("utf-8"))
            reply = self.listener.apply(cmd)
        except (CommandError, UnicodeDecodeError) as exc:
            client.send_frame({"type": "error", "epoch": self._next_epoch(),
                               "error": str(exc)})
            return
        reply_frame = {"type": "reply", "epoch": self._next_epoch(),
                       "cmd": cmd.kind, "paused": self.session._paused}
        reply_frame.update(reply)
        client.send_frame(reply_frame)
        if cmd.kind == "shutdown":
            self.shutdown_requested = True

    def _serve_static(self, conn: socket.socket, path: str) -> None:
        body, content_type, status = self._static_body(path)
        response = (f"HTTP/1.1 {status}\r\n"
                    f"Content-Type: {content_type}\r\n"
                    f"Content-Length: {len(body)}\r\n"
                    "Connection: close\r\n\r\n").encode() + body
        conn.sendall(response)

    def _static_body(self, path: str):
        clean = path.split("?")[0]
        if clean in ("/", "/index.html"):
            clean = "/index.html"
        if self.panel_dir:
            base = Path(self.panel_dir).resolve()
            target = (base / clean.lstrip("/")).resolve()
            if base in target.parents or target == base:
                if target.is_file():
                    ctype = {
                        ".html": "text/html", ".js": "text/javascript",
                        ".css": "text/css", ".map": "application/json",
                        ".json": "application/json",
                    }.get(target.suffix, "application/octet-stream")
                    return target.read_bytes(), ctype, "200 OK"
        if clean == "/index.html":
            return _FALLBACK_PAGE.encode(), "text/html", "200 OK"
        return b"not found", "text/plain", "404 Not Found"

    def close(self) -> None:
        self._closed.set()
        if self.listener.open:
            self.listener.close_channel()
        try:
            self.server.close()
        except OSError:
            pass
        with self.clients_lock:
            for c in self.clients:
                try:
                    c.conn.close()
                except OSError:
                    pass
            self.clients.clear()


def serve_gateway(session: Session, host: str, port: int,
                  panel_dir: Optional[str] = None) -> Gateway:
    """Bind the gateway; raises OSError when the endpoint is unavailable."""
    return Gateway(session, host, port, panel_dir)
