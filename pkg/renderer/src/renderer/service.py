"""TCP inference service.

Speaks the reenactment engine's frame schema over length-prefixed JSON:
each request is {"type": "frame", "t", "nmfc_png", "gaze_png", "mouth_roi",
"latency_ms", ...} with base64 PNG conditioning images, and the reply is a
frame message carrying "output_png".  Malformed input gets an error message
with code "bad_message"; synthesis failures get "internal".  Each
connection owns one FrameSynthesizer, so one engine session maps to one
connection and keeps its own temporal state.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import socket
import threading
import time

import numpy as np
from PIL import Image

from .errors import ProtocolError, RendererError
from .infer import FrameSynthesizer, LoadedRenderer
from .wire import PacketReader, encode_json, encode_packet

log = logging.getLogger("renderer.service")


def _decode_png(field: str, value) -> np.ndarray:
    if not isinstance(value, str) or not value:
        raise ProtocolError("bad_message", f"frame is missing {field}")
    try:
        raw = base64.b64decode(value, validate=True)
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise ProtocolError("bad_message", f"cannot decode {field}: {exc}") from exc


def _encode_png(frame: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(frame).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class RenderService:
    """Threaded request/reply server around one loaded checkpoint."""

    def __init__(self, loaded: LoadedRenderer, host: str = "127.0.0.1", port: int = 0):
        self.loaded = loaded
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.host, self.port = self._server.getsockname()[:2]
        self._stop = threading.Event()
        self._infer_lock = threading.Lock()  # one request at a time per checkpoint
        self._accept_thread: threading.Thread | None = None
        self._conn_threads: list[threading.Thread] = []

    def start(self) -> "RenderService":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        log.info("renderer service listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)
        self._server.close()
        for t in self._conn_threads:
            t.join(timeout=2.0)

    def __enter__(self) -> "RenderService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._conn_threads.append(t)

    def _serve_connection(self, conn: socket.socket) -> None:
        reader = PacketReader()
        synth = FrameSynthesizer(self.loaded)
        conn.settimeout(0.2)
        try:
            while not self._stop.is_set():
                try:
                    data = conn.recv(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                try:
                    bodies = reader.feed(data)
                except ProtocolError as exc:
                    # Framing is gone; report once and drop the connection.
                    conn.sendall(encode_packet(encode_json(
                        {"type": "error", "code": exc.code, "msg": exc.msg}
                    )))
                    break
                for body in bodies:
                    conn.sendall(encode_packet(self.handle_body(body, synth)))
        finally:
            conn.close()

    def handle_body(self, body: bytes, synth: FrameSynthesizer) -> bytes:
        """One request to one reply; never raises."""
        t = None
        try:
            try:
                msg = json.loads(body)
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolError("bad_message", f"body is not valid JSON: {exc}") from exc
            if not isinstance(msg, dict) or msg.get("type") != "frame":
                raise ProtocolError("bad_message", "renderer accepts only frame messages")
            t = msg.get("t")
            if not isinstance(t, (int, float)) or isinstance(t, bool):
                raise ProtocolError("bad_message", "frame needs a numeric t")
            roi = msg.get("mouth_roi")
            if (
                not isinstance(roi, list)
                or len(roi) != 4
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in roi)
            ):
                raise ProtocolError("bad_message", "mouth_roi must hold 4 integers")
            nmfc = _decode_png("nmfc_png", msg.get("nmfc_png"))
            gaze = _decode_png("gaze_png", msg.get("gaze_png"))
            started = time.perf_counter()
            try:
                with self._infer_lock:
                    output = synth.step(nmfc, gaze)
            except RendererError as exc:
                raise ProtocolError("internal", f"synthesis failed: {exc}") from exc
            latency_ms = (time.perf_counter() - started) * 1000.0
            return encode_json(
                {
                    "type": "frame",
                    "t": float(t),
                    "output_png": _encode_png(output),
                    "mouth_roi": roi,
                    "latency_ms": latency_ms,
                    "stale": bool(msg.get("stale", False)),
                }
            )
        except ProtocolError as exc:
            return encode_json({"type": "error", "code": exc.code, "msg": exc.msg, "t": t})
        except Exception as exc:  # pragma: no cover - last-resort guard
            log.exception("unexpected error handling a frame")
            return encode_json({"type": "error", "code": "internal", "msg": str(exc), "t": t})
