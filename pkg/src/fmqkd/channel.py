"""Channel layer: deterministic in-process delivery and TCP sockets.

Both modes move the same message set. The in-process endpoint hands each
sent message straight to a responder callable and queues the replies, which
makes delivery a deterministic FIFO; the socket endpoint moves encoded
frames over TCP in send order.
"""

from __future__ import annotations

import socket
import time
from collections import deque
from typing import Callable, List, Optional

from .errors import ChannelError, IncompleteFrameError
from .framing import HEADER, Message, decode_frame, encode_frame

Responder = Callable[[Message], List[Message]]


class InProcessEndpoint:
    """Driver-side endpoint wired directly to the peer's handler."""

    def __init__(self, responder: Responder):
        self._responder = responder
        self._inbox: deque = deque()
        self._closed = False

    def send(self, msg: Message) -> None:
        if self._closed:
            raise ChannelError("channel is closed")
        self._inbox.extend(self._responder(msg))

    def recv(self) -> Message:
        if not self._inbox:
            raise ChannelError("no message pending on in-process channel")
        return self._inbox.popleft()

    def close(self) -> None:
        self._closed = True


class SocketEndpoint:
    """Frame-oriented endpoint over a connected TCP socket."""

    def __init__(self, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock

    def send(self, msg: Message) -> None:
        try:
            self._sock.sendall(encode_frame(msg))
        except OSError as exc:
            raise ChannelError(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self._sock.recv(n - got)
            except OSError as exc:
                raise ChannelError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ChannelError("peer closed the connection mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self) -> Message:
        header = self._recv_exact(HEADER.size)
        _, _, length = HEADER.unpack(header)
        payload = self._recv_exact(length) if length else b""
        try:
            return decode_frame(header + payload)
        except IncompleteFrameError as exc:  # length field lied
            raise ChannelError(str(exc)) from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def open_in_process(responder: Responder) -> InProcessEndpoint:
    return InProcessEndpoint(responder)


def open_channel(mode: str, responder: Optional[Responder] = None,
                 host: str = "127.0.0.1", port: int = 0):
    """Driver-side endpoint for the requested mode.

    "in_process" wires the endpoint straight to ``responder``; "socket"
    connects to a peer already serving on (host, port).
    """
    if mode == "in_process":
        if responder is None:
            raise ValueError("in_process mode needs the peer's responder")
        return InProcessEndpoint(responder)
    if mode == "socket":
        return connect(host, port)
    raise ValueError(f"mode must be 'in_process' or 'socket', got {mode!r}")


def connect(host: str, port: int, attempts: int = 40, delay_s: float = 0.25) -> SocketEndpoint:
    """Connect to a serving peer, retrying while it starts up."""
    last: Optional[Exception] = None
    for _ in range(attempts):
        try:
            sock = socket.create_connection((host, port), timeout=30.0)
            sock.settimeout(None)
            return SocketEndpoint(sock)
        except OSError as exc:
            last = exc
            time.sleep(delay_s)
    raise ChannelError(f"could not connect to {host}:{port}: {last}")


def serve_once(host: str, port: int, responder: Responder,
               is_done: Callable[[], bool],
               on_listening: Optional[Callable[[int], None]] = None) -> None:
    """Accept one connection and serve it until the session reports done.

    ``on_listening`` receives the bound port before accept, so callers can
    pass port 0 and learn the kernel-assigned one.
    """
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(1)
        if on_listening is not None:
            on_listening(listener.getsockname()[1])
        conn, _ = listener.accept()
    except OSError as exc:
        listener.close()
        raise ChannelError(f"listen on {host}:{port} failed: {exc}") from exc
    endpoint = SocketEndpoint(conn)
    try:
        with conn:
            while not is_done():
                msg = endpoint.recv()
                for reply in responder(msg):
                    endpoint.send(reply)
    finally:
        listener.close()
