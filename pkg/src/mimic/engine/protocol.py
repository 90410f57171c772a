"""Wire protocol: message schemas, deterministic encoding, framing.

Transport framing (TCP): every packet is a big-endian u32 byte length
followed by the body.  A body starting with any byte other than 0x00 is a
UTF-8 JSON message; a body starting with 0x00 is a binary frame: the marker,
a big-endian u32 header length, the UTF-8 JSON header, then the raw payloads
whose sizes the header lists.  Over WebSockets the same bodies travel as
text and binary frames with no length prefix.

Sessions are connection-scoped: a connection opens one with hello and every
later message on that connection belongs to it, so client messages carry no
session field.  JSON encoding is canonical (sorted keys, no whitespace) so
identical message content always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..errors import ProtocolError

MAX_PACKET_BYTES = 16 * 1024 * 1024
RAW_FRAME_MARKER = 0x00

ERROR_CODES = frozenset(
    ["bad_message", "no_session", "not_found", "degenerate", "internal", "neural_timeout"]
)

RENDERER_MODES = ("conditioning_only", "neural")


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------

class SessionSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    raw_frames: bool = False
    renderer: Literal["conditioning_only", "neural"] = "conditioning_only"


class HelloMsg(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    type: Literal["hello"] = "hello"
    model: str | None = None
    profile_label: str | None = None
    settings: SessionSettings = Field(default_factory=SessionSettings)


class LandmarksMsg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["landmarks"] = "landmarks"
    t: float
    pts: list[float]
    iris: list[float] | None = None
    w: int = Field(ge=1)
    h: int = Field(ge=1)

    @field_validator("t")
    @classmethod
    def _finite_t(cls, v):
        if not np.isfinite(v):
            raise ValueError("t must be finite")
        return v

    @field_validator("pts")
    @classmethod
    def _pts_shape(cls, v):
        if len(v) != 136:
            raise ValueError(f"pts must hold 136 values (68 landmarks), got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("pts must be finite")
        return v

    @field_validator("iris")
    @classmethod
    def _iris_shape(cls, v):
        if v is not None:
            if len(v) != 4:
                raise ValueError(f"iris must hold 4 values (two centers), got {len(v)}")
            if not np.all(np.isfinite(v)):
                raise ValueError("iris must be finite")
        return v


class PolicyMsg(BaseModel):
    """Replaces the session's swap policy; omitted fields revert to defaults."""

    model_config = ConfigDict(extra="forbid")

    type: Literal["policy"] = "policy"
    retarget_pose: bool = True
    expression_gain: float = 1.0
    transfer_gaze: bool = True
    clamp_expression: bool = True

    @field_validator("expression_gain")
    @classmethod
    def _gain_ok(cls, v):
        if not np.isfinite(v) or v < 0.0:
            raise ValueError(f"expression_gain must be finite and >= 0, got {v}")
        return v


class ByeMsg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["bye"] = "bye"


class ReadyMsg(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    type: Literal["ready"] = "ready"
    session_id: str
    model: str | None = None
    profile_label: str | None = None
    width: int | None = None
    height: int | None = None
    k_id: int | None = None
    k_exp: int | None = None
    raw_frames: bool = False
    renderer: str = "conditioning_only"


class FrameMsg(BaseModel):
    type: Literal["frame"] = "frame"
    t: float
    nmfc_png: str | None = None  # base64; absent in raw mode
    gaze_png: str | None = None
    output_png: str | None = None  # only in neural renderer mode
    mouth_roi: list[int]
    latency_ms: float
    stale: bool = False

    @field_validator("mouth_roi")
    @classmethod
    def _roi_len(cls, v):
        if len(v) != 4:
            raise ValueError(f"mouth_roi must hold 4 values (x, y, w, h), got {len(v)}")
        return v


class ErrorMsg(BaseModel):
    type: Literal["error"] = "error"
    code: str
    msg: str
    t: float | None = None

    @field_validator("code")
    @classmethod
    def _known_code(cls, v):
        if v not in ERROR_CODES:
            raise ValueError(f"unknown error code '{v}'")
        return v


ClientMessage = Annotated[Union[HelloMsg, LandmarksMsg, PolicyMsg, ByeMsg], Field(discriminator="type")]
ServerMessage = Annotated[Union[ReadyMsg, FrameMsg, ErrorMsg], Field(discriminator="type")]

_CLIENT_TYPES = {"hello": HelloMsg, "landmarks": LandmarksMsg, "policy": PolicyMsg, "bye": ByeMsg}
_SERVER_TYPES = {"ready": ReadyMsg, "frame": FrameMsg, "error": ErrorMsg}


def encode_message(msg: BaseModel) -> bytes:
    """Canonical JSON bytes: sorted keys, compact separators."""
    obj = msg.model_dump(exclude_none=True)
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _parse(body: bytes, table: dict) -> BaseModel:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("bad_message", f"body is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("bad_message", "message must be a JSON object")
    kind = obj.get("type")
    cls = table.get(kind)
    if cls is None:
        raise ProtocolError("bad_message", f"unknown message type {kind!r}")
    try:
        return cls.model_validate(obj)
    except ValidationError as exc:
        raise ProtocolError("bad_message", f"invalid {kind} message: {exc.errors()[0]['msg']}") from exc


def parse_client_message(body: bytes):
    return _parse(body, _CLIENT_TYPES)


def parse_server_message(body: bytes):
    return _parse(body, _SERVER_TYPES)


# ---------------------------------------------------------------------------
# Length-prefixed packets (TCP)
# ---------------------------------------------------------------------------

def encode_packet(body: bytes) -> bytes:
    if len(body) > MAX_PACKET_BYTES:
        raise ProtocolError("bad_message", f"packet of {len(body)} bytes exceeds the limit")
    return struct.pack(">I", len(body)) + body


class PacketReader:
    """Incremental length-prefix decoder; feed bytes, iterate complete bodies."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < 4:
                return out
            (size,) = struct.unpack_from(">I", self._buf, 0)
            if size > MAX_PACKET_BYTES:
                raise ProtocolError("bad_message", f"declared packet size {size} exceeds the limit")
            if len(self._buf) < 4 + size:
                return out
            out.append(bytes(self._buf[4 : 4 + size]))
            del self._buf[: 4 + size]

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


# ---------------------------------------------------------------------------
# Binary frame bodies (raw mode)
# ---------------------------------------------------------------------------

def pack_raw_frame(header: dict, payloads: list[bytes]) -> bytes:
    """0x00 marker, u32 header length, canonical JSON header, raw payloads.

    The header's payload_sizes field is (re)written from the actual payloads
    so the two can never disagree.
    """
    header = dict(header)
    header["payload_sizes"] = [len(p) for p in payloads]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return bytes([RAW_FRAME_MARKER]) + struct.pack(">I", len(head)) + head + b"".join(payloads)


def is_raw_frame(body: bytes) -> bool:
    return len(body) > 0 and body[0] == RAW_FRAME_MARKER


def unpack_raw_frame(body: bytes) -> tuple[dict, list[bytes]]:
    if not is_raw_frame(body) or len(body) < 5:
        raise ProtocolError("bad_message", "not a binary frame body")
    (head_len,) = struct.unpack_from(">I", body, 1)
    head_end = 5 + head_len
    if head_end > len(body):
        raise ProtocolError("bad_message", "binary frame header is truncated")
    try:
        header = json.loads(body[5:head_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("bad_message", f"binary frame header is not JSON: {exc}") from exc
    sizes = header.get("payload_sizes")
    if not isinstance(sizes, list) or not all(isinstance(s, int) and s >= 0 for s in sizes):
        raise ProtocolError("bad_message", "binary frame header lacks payload_sizes")
    payloads = []
    offset = head_end
    for size in sizes:
        if offset + size > len(body):
            raise ProtocolError("bad_message", "binary frame payloads are truncated")
        payloads.append(body[offset : offset + size])
        offset += size
    if offset != len(body):
        raise ProtocolError("bad_message", f"binary frame has {len(body) - offset} trailing bytes")
    return header, payloads


def landmarks_to_frame(msg: LandmarksMsg):
    """LandmarksMsg as a tracking input frame."""
    from ..tracking import LandmarkFrame

    pts = np.asarray(msg.pts, dtype=np.float64).reshape(68, 2)
    iris = None if msg.iris is None else np.asarray(msg.iris, dtype=np.float64).reshape(2, 2)
    return LandmarkFrame(t=msg.t, points=pts, iris=iris, frame_size=(msg.w, msg.h))
