"""Optional real-socket Modbus-TCP transport.

Serves a register map over an actual TCP endpoint using the same request
handler as the in-memory PLC node, so third-party Modbus masters can talk to
it.  Only used for interop demos; simulations never touch sockets.
"""
from __future__ import annotations

import socket
import socketserver
import threading

from .nodes import handle_modbus
from .protocol.registers import RegisterMap

MBAP_LEN = 7


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed mid-frame")
        buf += chunk
    return buf


def recv_frame(sock: socket.socket) -> bytes:
    """Read one MBAP-delimited Modbus-TCP frame."""
    head = _recv_exact(sock, MBAP_LEN)
    length = int.from_bytes(head[4:6], "big")
    if length < 2:
        raise ConnectionError(f"bad MBAP length {length}")
    return head + _recv_exact(sock, length - 1)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: ModbusTcpServer = self.server
        while True:
            try:
                frame = recv_frame(self.request)
            except (ConnectionError, OSError):
                return
            with server.lock:
                reply = handle_modbus(server.registers, frame)
            if reply is None:
                return
            self.request.sendall(reply)


class ModbusTcpServer(socketserver.ThreadingTCPServer):
    """Modbus-TCP slave backed by a :class:`RegisterMap`."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address=("127.0.0.1", 0), registers: RegisterMap | None = None):
        self.registers = registers if registers is not None else RegisterMap()
        self.lock = threading.Lock()
        super().__init__(address, _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]


def modbus_exchange(host: str, port: int, request: bytes, timeout: float = 2.0) -> bytes:
    """Send one encoded request and return the encoded reply."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(request)
        return recv_frame(sock)
