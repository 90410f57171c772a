"""Reenactment service: HTTP + WebSocket app and the TCP wire server.

One process serves three surfaces over shared engine state:
  - GET /health and GET /profiles (JSON over HTTP),
  - the wire protocol over WebSocket at /ws (text JSON, binary frames),
  - the same wire protocol over plain TCP with length-prefixed packets.

Sessions are connection-scoped: hello opens the connection's session, every
later message belongs to it, and bye or disconnect closes it.  Pipelines are
CPU-bound and run in the default thread executor; a connection's messages
are processed strictly in arrival order.
"""

from __future__ import annotations

import asyncio
import contextlib
import glob
import logging
import os
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from ..conditioning import RasterSettings
from ..errors import DataError, DegenerateConfiguration, MimicError, ProtocolError
from ..model import FaceModel, NmfcPalette, load_model, make_synthetic_model, nmfc_palette
from ..raster import warm_up
from ..reenact import TargetProfile, load_profile
from ..tracking import SolverConfig
from . import protocol
from .neural import NeuralClient
from .session import Pipeline, Session, new_session

log = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    model: str = "synthetic"  # default model: a directory, or synthetic[:seed]
    models_dir: str | None = None  # extra models, one directory per name
    profiles_dir: str = "profiles"
    host: str = "127.0.0.1"
    http_port: int = 8080
    port: int = 9100  # wire protocol (TCP)
    width: int = 256
    height: int = 256
    neural_endpoint: str | None = None  # host:port of a neural renderer
    solver: SolverConfig = field(default_factory=SolverConfig)

    @staticmethod
    def from_dict(data: dict) -> "EngineConfig":
        data = dict(data)
        solver = data.pop("solver", None)
        cfg = EngineConfig(**data)
        if solver:
            cfg.solver = SolverConfig.from_dict(solver)
        return cfg


def resolve_model(ref: str) -> FaceModel:
    """A model directory path, or synthetic[:seed] for a generated head."""
    if ref == "synthetic" or ref.startswith("synthetic:"):
        seed = 0
        if ":" in ref:
            try:
                seed = int(ref.split(":", 1)[1])
            except ValueError as exc:
                raise DataError(f"bad synthetic model seed in '{ref}'") from exc
        return make_synthetic_model(seed=seed)
    return load_model(ref)


def scan_profiles(profiles_dir: str) -> list[tuple[str, TargetProfile]]:
    """(path, profile) for every readable profile file, sorted by filename."""
    entries = []
    for path in sorted(glob.glob(os.path.join(profiles_dir, "*.json"))):
        try:
            entries.append((path, load_profile(path)))
        except DataError as exc:
            log.warning("skipping unreadable profile %s: %s", path, exc)
    return entries


class EngineState:
    """Config, the model registry, and the pieces shared by all sessions."""

    def __init__(self, config: EngineConfig, model: FaceModel | None = None):
        self.config = config
        self.default_model = model if model is not None else resolve_model(config.model)
        self._models: dict[str, FaceModel] = {self.default_model.name: self.default_model}
        self._palettes: dict[str, NmfcPalette] = {}
        self.settings = RasterSettings(width=config.width, height=config.height)
        self.sessions: set[Session] = set()

    def find_model(self, name: str | None) -> FaceModel:
        if name is None:
            return self.default_model
        model = self._models.get(name)
        if model is not None:
            return model
        if self.config.models_dir is not None:
            path = os.path.join(self.config.models_dir, name)
            if os.path.isdir(path):
                try:
                    model = load_model(path)
                except DataError as exc:
                    raise ProtocolError("not_found", f"model '{name}' failed to load: {exc}") from exc
                if model.name != name:
                    raise ProtocolError(
                        "not_found", f"directory '{name}' holds model '{model.name}'"
                    )
                self._models[name] = model
                return model
        raise ProtocolError("not_found", f"no model named '{name}'")

    def palette_for(self, model: FaceModel) -> NmfcPalette:
        palette = self._palettes.get(model.name)
        if palette is None:
            palette = self._palettes[model.name] = nmfc_palette(model)
        return palette

    def find_profile(self, label: str) -> TargetProfile:
        for _, profile in scan_profiles(self.config.profiles_dir):
            if profile.label == label:
                return profile
        raise ProtocolError("not_found", f"no profile labelled '{label}'")

    def open_session(self, hello: protocol.HelloMsg) -> Session:
        model = self.find_model(hello.model)
        profile = None
        if hello.profile_label is not None:
            profile = self.find_profile(hello.profile_label)
            try:
                profile.check_model(model)
            except MimicError as exc:
                raise ProtocolError("not_found", str(exc)) from exc
        neural = None
        if hello.settings.renderer == "neural":
            if self.config.neural_endpoint is None:
                raise ProtocolError("not_found", "no neural renderer endpoint is configured")
            neural = NeuralClient(self.config.neural_endpoint)
        pipeline = Pipeline(
            model,
            cfg=self.config.solver,
            settings=self.settings,
            profile=profile,
            palette=self.palette_for(model),
            raw_frames=hello.settings.raw_frames,
            neural=neural,
        )
        session = new_session(pipeline)
        self.sessions.add(session)
        log.info(
            "session %s opened (model=%s profile=%s renderer=%s raw=%s)",
            session.id,
            model.name,
            hello.profile_label,
            hello.settings.renderer,
            hello.settings.raw_frames,
        )
        return session

    def close_session(self, session: Session) -> None:
        self.sessions.discard(session)
        session.close()

    def drain(self) -> None:
        for session in list(self.sessions):
            self.close_session(session)

    def ready_message(self, session: Session) -> protocol.ReadyMsg:
        pipeline = session.pipeline
        return protocol.ReadyMsg(
            session_id=session.id,
            model=pipeline.model.name,
            profile_label=pipeline.profile.label if pipeline.profile else None,
            k_id=pipeline.model.n_id,
            k_exp=pipeline.model.n_exp,
            width=pipeline.settings.width,
            height=pipeline.settings.height,
            raw_frames=pipeline.raw_frames,
            renderer="neural" if pipeline.neural is not None else "conditioning_only",
        )


def _error_body(code: str, message: str, t: float | None = None) -> bytes:
    return protocol.encode_message(protocol.ErrorMsg(code=code, msg=message, t=t))


class WireConnection:
    """Protocol state for one client connection: at most one live session."""

    def __init__(self, state: EngineState):
        self.state = state
        self.session: Session | None = None

    async def handle_body(self, body: bytes) -> bytes:
        """One request body in, exactly one response body out."""
        try:
            msg = protocol.parse_client_message(body)
        except ProtocolError as exc:
            return _error_body(exc.code, str(exc))

        if isinstance(msg, protocol.HelloMsg):
            if self.session is not None:
                return _error_body("bad_message", "connection already has a session; send bye first")
            try:
                self.session = self.state.open_session(msg)
            except ProtocolError as exc:
                return _error_body(exc.code, str(exc))
            except MimicError as exc:
                return _error_body("internal", str(exc))
            return protocol.encode_message(self.state.ready_message(self.session))

        if isinstance(msg, protocol.LandmarksMsg):
            if self.session is None:
                return _error_body("no_session", "send hello before landmarks", t=msg.t)
            session = self.session
            loop = asyncio.get_running_loop()
            try:
                result = await loop.run_in_executor(None, session.handle_landmarks, msg)
            except DegenerateConfiguration as exc:
                return _error_body("degenerate", str(exc), t=msg.t)
            except ProtocolError as exc:
                return _error_body(exc.code, str(exc), t=msg.t)
            except MimicError as exc:
                return _error_body("internal", str(exc), t=msg.t)
            except Exception as exc:  # noqa: BLE001 - protocol demands an answer per request
                log.exception("pipeline failure in session %s", session.id)
                return _error_body("internal", f"pipeline failure: {exc}", t=msg.t)
            return session.frame_body(msg, result)

        if isinstance(msg, protocol.PolicyMsg):
            if self.session is None:
                return _error_body("no_session", "send hello before policy")
            self.session.set_policy(msg)
            return protocol.encode_message(self.state.ready_message(self.session))

        # Bye: acknowledge with a final ready naming the session that closed.
        if self.session is None:
            return _error_body("no_session", "no session to close")
        ack = protocol.ReadyMsg(session_id=self.session.id)
        self.state.close_session(self.session)
        self.session = None
        return protocol.encode_message(ack)

    def disconnect(self) -> None:
        if self.session is not None:
            self.state.close_session(self.session)
            self.session = None


def create_app(state: EngineState) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        warm_up()
        tcp_server = await asyncio.start_server(
            lambda r, w: _tcp_connection(state, r, w), state.config.host, state.config.port
        )
        log.info(
            "engine ready: model=%s http=%s:%d tcp=%s:%d",
            state.default_model.name,
            state.config.host,
            state.config.http_port,
            state.config.host,
            state.config.port,
        )
        try:
            yield
        finally:
            tcp_server.close()
            await tcp_server.wait_closed()
            state.drain()

    app = FastAPI(title="reenactment engine", lifespan=lifespan)
    # the browser console is served from its own origin, so the read-only
    # endpoints need permissive CORS
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"], allow_headers=["*"]
    )

    @app.get("/health")
    def health():
        return {"status": "ok", "model": state.default_model.name, "sessions": len(state.sessions)}

    @app.get("/profiles")
    def profiles():
        return [
            {
                "label": profile.label,
                "model_name": profile.model_name,
                "file": os.path.basename(path),
            }
            for path, profile in scan_profiles(state.config.profiles_dir)
        ]

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        conn = WireConnection(state)
        try:
            while True:
                event = await websocket.receive()
                if event["type"] == "websocket.disconnect":
                    break
                if event.get("text") is not None:
                    body = event["text"].encode("utf-8")
                elif event.get("bytes") is not None:
                    body = event["bytes"]
                else:
                    continue
                reply = await conn.handle_body(body)
                if protocol.is_raw_frame(reply):
                    await websocket.send_bytes(reply)
                else:
                    await websocket.send_text(reply.decode("utf-8"))
        except WebSocketDisconnect:
            pass
        finally:
            conn.disconnect()

    return app


async def _tcp_connection(state: EngineState, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
    peer = writer.get_extra_info("peername")
    log.debug("tcp connection from %s", peer)
    conn = WireConnection(state)
    packets = protocol.PacketReader()
    try:
        while True:
            data = await reader.read(65536)
            if not data:
                break
            try:
                bodies = packets.feed(data)
            except ProtocolError as exc:
                writer.write(protocol.encode_packet(_error_body(exc.code, str(exc))))
                await writer.drain()
                break
            for body in bodies:
                reply = await conn.handle_body(body)
                writer.write(protocol.encode_packet(reply))
                await writer.drain()
    except (ConnectionResetError, BrokenPipeError):
        pass
    finally:
        conn.disconnect()
        writer.close()
        with contextlib.suppress(Exception):
            await writer.wait_closed()
        log.debug("tcp connection from %s closed", peer)


def run_service(config: EngineConfig) -> None:
    import uvicorn

    state = EngineState(config)
    app = create_app(state)
    uvicorn.run(app, host=config.host, port=config.http_port, log_level="warning")
