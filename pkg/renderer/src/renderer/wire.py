"""Length-prefixed JSON framing for the inference service.

Each packet is a big-endian u32 byte count followed by exactly that many
bytes of UTF-8 JSON.  Packets above MAX_PACKET_BYTES are rejected before
any allocation so a bad peer cannot balloon memory.
"""

from __future__ import annotations

import json
import struct

from .errors import ProtocolError

MAX_PACKET_BYTES = 16 * 1024 * 1024


def encode_packet(body: bytes) -> bytes:
    if len(body) > MAX_PACKET_BYTES:
        raise ProtocolError("bad_message", f"packet of {len(body)} bytes exceeds the {MAX_PACKET_BYTES} limit")
    return struct.pack(">I", len(body)) + body


def encode_json(obj: dict) -> bytes:
    """Canonical JSON: sorted keys, no whitespace, None entries dropped."""
    clean = {k: v for k, v in obj.items() if v is not None}
    return json.dumps(clean, sort_keys=True, separators=(",", ":")).encode("utf-8")


class PacketReader:
    """Incremental splitter: feed() returns every completed packet body."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buffer.extend(data)
        bodies: list[bytes] = []
        while len(self._buffer) >= 4:
            (length,) = struct.unpack_from(">I", self._buffer)
            if length > MAX_PACKET_BYTES:
                raise ProtocolError(
                    "bad_message", f"peer announced a {length} byte packet, limit is {MAX_PACKET_BYTES}"
                )
            if len(self._buffer) < 4 + length:
                break
            bodies.append(bytes(self._buffer[4 : 4 + length]))
            del self._buffer[: 4 + length]
        return bodies
