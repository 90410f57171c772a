"""Client for an out-of-process neural renderer.

The renderer is a TCP service speaking the same length-prefixed Frame
schema as the engine: it receives a Frame carrying conditioning PNGs and
replies with a Frame carrying output_png.  The client keeps one persistent
connection and reconnects lazily after failures; any connect, send, receive
or deadline problem surfaces as a neural_timeout protocol error so a session
can report it without dying.
"""

from __future__ import annotations

import socket

from ..errors import ProtocolError
from .protocol import FrameMsg, PacketReader, encode_message, encode_packet, parse_server_message


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ProtocolError("bad_message", f"endpoint must be host:port, got {endpoint!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise ProtocolError("bad_message", f"endpoint port is not a number: {endpoint!r}") from exc


class NeuralClient:
    """Blocking request/response client; one in-flight frame at a time."""

    def __init__(self, endpoint: str, timeout_s: float = 2.0):
        self.host, self.port = parse_endpoint(endpoint)
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None
        self._reader = PacketReader()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout_s)
                self._sock.settimeout(self.timeout_s)
            except OSError as exc:
                raise ProtocolError(
                    "neural_timeout", f"cannot reach renderer at {self.host}:{self.port}: {exc}"
                ) from exc
            self._reader = PacketReader()
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def render(self, frame: FrameMsg) -> FrameMsg:
        """Sends a conditioning frame, returns the renderer's output frame."""
        sock = self._connect()
        try:
            sock.sendall(encode_packet(encode_message(frame)))
            while True:
                data = sock.recv(65536)
                if not data:
                    raise OSError("renderer closed the connection")
                bodies = self._reader.feed(data)
                if bodies:
                    break
        except OSError as exc:
            self.close()
            raise ProtocolError("neural_timeout", f"renderer request failed: {exc}") from exc
        reply = parse_server_message(bodies[0])
        if len(bodies) > 1:
            # One request, one reply; anything extra means the peer is broken.
            self.close()
            raise ProtocolError("neural_timeout", "renderer sent more than one reply")
        if reply.type == "error":
            raise ProtocolError(reply.code, reply.msg)
        if reply.type != "frame" or reply.output_png is None:
            self.close()
            raise ProtocolError("neural_timeout", "renderer reply lacks an output frame")
        return reply
