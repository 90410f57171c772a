"""Per-session reenactment pipeline and performance accounting."""

from __future__ import annotations

import base64
import io
import logging
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..conditioning import ConditioningFrame, RasterSettings, render_conditioning
from ..model import FaceModel, NmfcPalette, nmfc_palette
from ..reenact import PoseStats, SwapPolicy, TargetProfile, pose_stats_from, swap_identity
from ..tracking import SolverConfig, TrackedFrame, Tracker
from . import protocol
from .neural import NeuralClient

log = logging.getLogger(__name__)

STAGES = ("track", "swap", "render", "encode", "total")


def encode_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image, "RGB").save(buf, format="PNG", compress_level=6, optimize=False)
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))


@dataclass
class PerfAccumulator:
    """Collects per-frame stage latencies; summarizes as a report."""

    samples: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in STAGES})
    frames_processed: int = 0
    frames_stale: int = 0

    def add(self, timings: dict[str, float], stale: bool) -> None:
        for key in STAGES:
            self.samples[key].append(timings[key])
        self.frames_processed += 1
        if stale:
            self.frames_stale += 1

    def report(self) -> dict:
        totals = np.asarray(self.samples["total"])
        if totals.size == 0:
            fps_mean = 0.0
            fps_p5 = 0.0
        else:
            fps_mean = 1000.0 * totals.size / float(totals.sum())
            # 5th percentile of instantaneous rate = the slowest-5% frame time.
            fps_p5 = 1000.0 / float(np.percentile(totals, 95.0))
        stages = {}
        for key in STAGES:
            vals = np.asarray(self.samples[key])
            if vals.size == 0:
                stages[key] = {"p50": 0.0, "p95": 0.0}
            else:
                stages[key] = {"p50": float(np.percentile(vals, 50.0)), "p95": float(np.percentile(vals, 95.0))}
        return {
            "fps_mean": fps_mean,
            "fps_p5": fps_p5,
            "frames_processed": self.frames_processed,
            "frames_stale": self.frames_stale,
            "stages": stages,
        }


@dataclass
class FrameResult:
    tracked: TrackedFrame
    output: TrackedFrame
    conditioning: ConditioningFrame
    nmfc_bytes: bytes
    gaze_bytes: bytes
    output_bytes: bytes | None
    timings: dict[str, float]
    raw: bool


class Pipeline:
    """track -> swap -> render -> encode for one stream of landmarks.

    Pose retargeting needs source statistics; in a live session they freeze
    together with the bootstrap identity (over the same calibration frames).
    Until then poses pass through unretargeted.  With a neural client the
    encoded conditioning is sent out for synthesis; that round trip counts
    toward the frame total but is not one of the named stages.
    """

    def __init__(
        self,
        model: FaceModel,
        cfg: SolverConfig | None = None,
        settings: RasterSettings | None = None,
        profile: TargetProfile | None = None,
        policy: SwapPolicy | None = None,
        identity: np.ndarray | None = None,
        source_stats: PoseStats | None = None,
        raw_frames: bool = False,
        palette: NmfcPalette | None = None,
        neural: NeuralClient | None = None,
    ):
        if profile is not None:
            profile.check_model(model)
        self.model = model
        self.cfg = cfg or SolverConfig()
        self.settings = settings or RasterSettings()
        self.profile = profile
        self.policy = policy or SwapPolicy()
        self.tracker = Tracker(model, self.cfg, identity=identity)
        self.palette = palette or nmfc_palette(model)
        self.source_stats = source_stats
        self.raw_frames = raw_frames
        self.neural = neural
        self._calibration_poses: list = []

    def _update_source_stats(self, tracked: TrackedFrame) -> None:
        if self.source_stats is not None or tracked.stale:
            return
        self._calibration_poses.append(tracked.pose)
        if len(self._calibration_poses) >= self.cfg.calibration_frames:
            self.source_stats = pose_stats_from(self._calibration_poses)
            self._calibration_poses = []
            log.info("source pose statistics frozen after %d frames", self.cfg.calibration_frames)

    def _neural_output(self, cond: ConditioningFrame, nmfc_png: bytes, gaze_png: bytes) -> bytes:
        request = protocol.FrameMsg(
            t=cond.t,
            nmfc_png=base64.b64encode(nmfc_png).decode("ascii"),
            gaze_png=base64.b64encode(gaze_png).decode("ascii"),
            mouth_roi=list(cond.mouth_box),
            latency_ms=0.0,
        )
        reply = self.neural.render(request)
        return base64.b64decode(reply.output_png)

    def process(self, lf) -> FrameResult:
        t0 = time.perf_counter()
        tracked = self.tracker.track_frame(lf)
        t1 = time.perf_counter()
        self._update_source_stats(tracked)
        if self.profile is not None:
            retarget_ready = self.source_stats is not None
            policy = self.policy
            if policy.retarget_pose and not retarget_ready:
                policy = SwapPolicy(
                    expression_gain=policy.expression_gain,
                    clamp_expression=policy.clamp_expression,
                    transfer_gaze=policy.transfer_gaze,
                    retarget_pose=False,
                )
            output = swap_identity(tracked, self.profile, policy, self.source_stats)
        else:
            output = tracked
        t2 = time.perf_counter()
        cond = render_conditioning(self.model, self.palette, output, self.settings)
        t3 = time.perf_counter()
        if self.neural is not None or not self.raw_frames:
            nmfc_png = encode_png_bytes(cond.nmfc)
            gaze_png = encode_png_bytes(cond.gaze)
        else:
            nmfc_png = gaze_png = b""
        t4 = time.perf_counter()
        output_bytes = None
        if self.neural is not None:
            output_bytes = self._neural_output(cond, nmfc_png, gaze_png)
        if self.raw_frames:
            nmfc_bytes = cond.nmfc.tobytes()
            gaze_bytes = cond.gaze.tobytes()
            if output_bytes is not None:
                output_bytes = decode_png_bytes(output_bytes).tobytes()
        else:
            nmfc_bytes = nmfc_png
            gaze_bytes = gaze_png
        t5 = time.perf_counter()
        timings = {
            "track": (t1 - t0) * 1000.0,
            "swap": (t2 - t1) * 1000.0,
            "render": (t3 - t2) * 1000.0,
            "encode": (t4 - t3) * 1000.0,
            "total": (t5 - t0) * 1000.0,
        }
        return FrameResult(
            tracked=tracked,
            output=output,
            conditioning=cond,
            nmfc_bytes=nmfc_bytes,
            gaze_bytes=gaze_bytes,
            output_bytes=output_bytes,
            timings=timings,
            raw=self.raw_frames,
        )

    def close(self) -> None:
        if self.neural is not None:
            self.neural.close()


class Session:
    """A pipeline bound to a wire session id, with perf accounting."""

    def __init__(self, session_id: str, pipeline: Pipeline):
        self.id = session_id
        self.pipeline = pipeline
        self.perf = PerfAccumulator()

    def handle_landmarks(self, msg: protocol.LandmarksMsg) -> FrameResult:
        lf = protocol.landmarks_to_frame(msg)
        result = self.pipeline.process(lf)
        self.perf.add(result.timings, result.output.stale)
        return result

    def set_policy(self, msg: protocol.PolicyMsg) -> None:
        self.pipeline.policy = SwapPolicy(
            retarget_pose=msg.retarget_pose,
            expression_gain=msg.expression_gain,
            transfer_gaze=msg.transfer_gaze,
            clamp_expression=msg.clamp_expression,
        )

    def frame_message(self, msg: protocol.LandmarksMsg, result: FrameResult) -> protocol.FrameMsg:
        fields = dict(
            t=msg.t,
            stale=result.output.stale,
            mouth_roi=list(result.conditioning.mouth_box),
            latency_ms=result.timings["total"],
        )
        if not result.raw:
            fields["nmfc_png"] = base64.b64encode(result.nmfc_bytes).decode("ascii")
            fields["gaze_png"] = base64.b64encode(result.gaze_bytes).decode("ascii")
            if result.output_bytes is not None:
                fields["output_png"] = base64.b64encode(result.output_bytes).decode("ascii")
        return protocol.FrameMsg(**fields)

    def frame_body(self, msg: protocol.LandmarksMsg, result: FrameResult) -> bytes:
        """Wire body for a processed frame: JSON or binary per the session."""
        frame = self.frame_message(msg, result)
        if not result.raw:
            return protocol.encode_message(frame)
        header = frame.model_dump(exclude_none=True)
        header["encoding"] = "raw"
        header["width"] = self.pipeline.settings.width
        header["height"] = self.pipeline.settings.height
        payloads = [result.nmfc_bytes, result.gaze_bytes]
        if result.output_bytes is not None:
            payloads.append(result.output_bytes)
        return protocol.pack_raw_frame(header, payloads)

    def close(self) -> None:
        self.pipeline.close()
        if self.perf.frames_processed:
            log.info("session %s perf: %s", self.id, self.perf.report())


def new_session(pipeline: Pipeline) -> Session:
    return Session(uuid.uuid4().hex, pipeline)
