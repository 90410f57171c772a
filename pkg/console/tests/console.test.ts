import { describe, expect, it } from "vitest";
import { ConsoleApp } from "../src/console.js";
import { LandmarkSource } from "../src/capture.js";
import { SocketLike } from "../src/connection.js";
import { LandmarkSample, POLICY_DEFAULTS } from "../src/schemas.js";
import { parseReplay } from "../src/replay.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  private listeners = new Map<string, Array<(ev: any) => void>>();
  addEventListener(type: string, listener: (ev: any) => void): void {
    const list = this.listeners.get(type) ?? [];
    list.push(listener);
    this.listeners.set(type, list);
  }
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.emit("close", {});
  }
  emit(type: string, ev: unknown): void {
    for (const listener of this.listeners.get(type) ?? []) listener(ev);
  }
  open(): void {
    this.emit("open", {});
  }
  reply(obj: Record<string, unknown>): void {
    this.emit("message", { data: JSON.stringify(obj) });
  }
  policies(): Array<Record<string, unknown>> {
    return this.sent.map((s) => JSON.parse(s)).filter((m) => m.type === "policy");
  }
}

class ManualSource implements LandmarkSource {
  cb: ((s: LandmarkSample | null) => void) | null = null;
  start(onTick: (s: LandmarkSample | null) => void): void {
    this.cb = onTick;
  }
  stop(): void {
    this.cb = null;
  }
  emit(s: LandmarkSample | null): void {
    this.cb?.(s);
  }
}

const READY = {
  type: "ready",
  session_id: "s1",
  model: "synthetic:3",
  profile_label: "live",
  width: 256,
  height: 256,
  k_id: 20,
  k_exp: 20,
  raw_frames: false,
  renderer: "conditioning_only",
};

function sampleAt(t: number, marker = 0): LandmarkSample {
  return { t, pts: new Array<number>(136).fill(marker), w: 640, h: 480 };
}

async function appUp() {
  const socket = new FakeSocket();
  const source = new ManualSource();
  const clock = { ms: 0 };
  const app = new ConsoleApp({
    url: "ws://host/ws",
    socketFactory: () => socket,
    source,
    hello: { profileLabel: "live" },
    now: () => clock.ms,
  });
  const started = app.start();
  socket.open();
  socket.reply(READY);
  await started;
  return { app, socket, source, clock };
}

describe("control wiring", () => {
  it("each control change emits exactly one policy message", async () => {
    const { app, socket } = await appUp();
    void app.setExpressionGain(0.5);
    void app.setTransferGaze(false);
    void app.setRetargetPose(false);
    void app.setClampExpression(false);
    expect(socket.policies()).toHaveLength(4);
    expect(socket.policies()[0]?.expression_gain).toBe(0.5);
    expect(socket.policies()[3]?.clamp_expression).toBe(false);
  });

  it("ui state reflects the last acknowledged policy, not the last request", async () => {
    const { app, socket } = await appUp();
    expect(app.state().ackedPolicy).toEqual(POLICY_DEFAULTS);
    const pending = app.setExpressionGain(0.0);
    expect(app.state().controls.expressionGain).toBe(0.0); // desired
    expect(app.state().ackedPolicy?.expressionGain).toBe(1.0); // acked
    socket.reply({ ...READY });
    await pending;
    expect(app.state().ackedPolicy?.expressionGain).toBe(0.0);
  });

  it("slider values are clamped to the 0..2 range", async () => {
    const { app, socket } = await appUp();
    const p = app.setExpressionGain(5.0);
    expect(app.state().controls.expressionGain).toBe(2.0);
    socket.reply({ ...READY });
    await p;
    expect(socket.policies()[0]?.expression_gain).toBe(2.0);
  });

  it("pose freeze stays client-side and sends no policy", async () => {
    const { app, socket, source } = await appUp();
    app.setPoseFreeze(true);
    expect(socket.policies()).toHaveLength(0);
    expect(app.state().poseFreeze).toBe(true);
    source.emit(sampleAt(0.1, 5));
    source.emit(sampleAt(0.2, 6)); // dropped by rate gate? clock frozen at 0
    expect(app.state().poseFreeze).toBe(true);
  });
});

describe("capture plumbing", () => {
  it("sends landmarks through the connection and tracks no-face", async () => {
    const { app, socket, source, clock } = await appUp();
    clock.ms = 0;
    source.emit(sampleAt(0.04));
    const sentTypes = socket.sent.map((s) => JSON.parse(s).type);
    expect(sentTypes).toContain("landmarks");
    clock.ms = 1200;
    source.emit(null);
    expect(app.state().noFace).toBe(true);
  });
});

describe("recording", () => {
  it("records exactly what was sent and exports a replayable file", async () => {
    const { app, source, clock } = await appUp();
    app.setRecording(true);
    for (let i = 0; i < 5; i += 1) {
      clock.ms = i * 40;
      source.emit(sampleAt(i * 0.04, i));
    }
    app.setRecording(false);
    expect(app.recordedCount()).toBe(5);
    const replay = parseReplay(app.exportReplay());
    expect(replay.map((s) => s.t)).toEqual([0, 0.04, 0.08, 0.12, 0.16]);
    expect(replay[2]?.pts[0]).toBe(2);
  });

  it("restarts the take when recording is toggled back on", async () => {
    const { app, source, clock } = await appUp();
    app.setRecording(true);
    clock.ms = 0;
    source.emit(sampleAt(0.04));
    app.setRecording(false);
    app.setRecording(true);
    clock.ms = 100;
    source.emit(sampleAt(0.1));
    expect(app.recordedCount()).toBe(1);
  });
});

describe("state snapshot", () => {
  it("exposes connection, profile, stats and banner in one view", async () => {
    const { app, socket } = await appUp();
    socket.reply({
      type: "frame",
      t: 0.04,
      nmfc_png: "aGk=",
      mouth_roi: [1, 1, 8, 8],
      latency_ms: 2.5,
      stale: false,
    });
    app.triptych.render();
    const state = app.state();
    expect(state.connection).toBe("ready");
    expect(state.sessionId).toBe("s1");
    expect(state.profile).toBe("live");
    expect(state.updates).toBe(1);
    expect(state.errorBanner).toBeNull();
    socket.reply({ type: "error", code: "no_session", msg: "say hello first" });
    expect(app.state().errorBanner).toBe("no_session: say hello first");
  });
});
