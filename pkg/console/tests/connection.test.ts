import { afterEach, describe, expect, it, vi } from "vitest";
import { EngineConnection, SocketLike } from "../src/connection.js";
import { ErrorMsg, FrameMsg, POLICY_DEFAULTS } from "../src/schemas.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
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
    if (this.closed) return;
    this.closed = true;
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

  sentJson(): Array<Record<string, unknown>> {
    return this.sent.map((s) => JSON.parse(s));
  }
}

let sessionCounter = 0;
function readyFor(socket: FakeSocket): Record<string, unknown> {
  sessionCounter += 1;
  return {
    type: "ready",
    session_id: `s${sessionCounter}`,
    model: "synthetic:3",
    width: 256,
    height: 256,
    k_id: 20,
    k_exp: 20,
    raw_frames: false,
    renderer: "conditioning_only",
  };
}

function connected() {
  const sockets: FakeSocket[] = [];
  const frames: Array<{ frame: FrameMsg; rtt: number | null }> = [];
  const errors: ErrorMsg[] = [];
  const conn = new EngineConnection(
    "ws://host/ws",
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    { profileLabel: "live" },
    {
      onFrame: (frame, rtt) => frames.push({ frame, rtt }),
      onError: (e) => errors.push(e),
    },
  );
  const promise = conn.connect();
  const socket = sockets[sockets.length - 1];
  if (socket === undefined) throw new Error("factory not called");
  socket.open();
  socket.reply(readyFor(socket));
  return { conn, socket, frames, errors, promise, sockets };
}

afterEach(() => {
  vi.useRealTimers();
});

describe("handshake", () => {
  it("sends hello on open and resolves on ready", async () => {
    const { conn, socket, promise } = connected();
    const ready = await promise;
    expect(conn.status).toBe("ready");
    expect(conn.sessionId).toBe(ready.session_id);
    const hello = socket.sentJson()[0];
    expect(hello?.type).toBe("hello");
    expect(hello?.profile_label).toBe("live");
    expect(conn.lastAckedPolicy).toEqual(POLICY_DEFAULTS);
  });

  it("rejects when no ready arrives in time", async () => {
    vi.useFakeTimers();
    const socket = new FakeSocket();
    const conn = new EngineConnection("ws://host/ws", () => socket);
    const promise = conn.connect();
    const expectation = expect(promise).rejects.toThrow(/timed out/);
    socket.open();
    vi.advanceTimersByTime(2000);
    await expectation;
    expect(conn.status).toBe("error");
    expect(conn.errorBanner).toContain("timed out");
    expect(socket.closed).toBe(true);
  });

  it("refuses landmarks before ready", () => {
    const socket = new FakeSocket();
    const conn = new EngineConnection("ws://host/ws", () => socket);
    void conn.connect().catch(() => undefined);
    expect(() =>
      conn.sendLandmarks({ t: 0, pts: new Array(136).fill(0), w: 64, h: 64 }),
    ).toThrow(/not connected/);
    conn.close();
  });
});

describe("policy acknowledgement", () => {
  it("updates lastAckedPolicy only when the ack lands", async () => {
    const { conn, socket, promise } = connected();
    await promise;
    const change = { ...POLICY_DEFAULTS, expressionGain: 0.5 };
    const ackPromise = conn.sendPolicy(change);
    // engine has not acked yet: the ui still shows the old policy
    expect(conn.lastAckedPolicy).toEqual(POLICY_DEFAULTS);
    socket.reply(readyFor(socket));
    await ackPromise;
    expect(conn.lastAckedPolicy).toEqual(change);
    expect(conn.policySent).toBe(1);
  });

  it("matches acks to sends in order", async () => {
    const { conn, socket, promise } = connected();
    await promise;
    const first = { ...POLICY_DEFAULTS, expressionGain: 0.2 };
    const second = { ...POLICY_DEFAULTS, expressionGain: 1.8 };
    const p1 = conn.sendPolicy(first);
    const p2 = conn.sendPolicy(second);
    socket.reply(readyFor(socket));
    await p1;
    expect(conn.lastAckedPolicy).toEqual(first);
    socket.reply(readyFor(socket));
    await p2;
    expect(conn.lastAckedPolicy).toEqual(second);
  });

  it("sends exactly one wire message per policy call", async () => {
    const { conn, socket, promise } = connected();
    await promise;
    const before = socket.sent.length;
    const p = conn.sendPolicy({ ...POLICY_DEFAULTS, transferGaze: false });
    socket.reply(readyFor(socket));
    await p;
    const after = socket.sentJson().slice(before);
    expect(after).toHaveLength(1);
    expect(after[0]?.type).toBe("policy");
    expect(after[0]?.transfer_gaze).toBe(false);
    // replace semantics: the full field set goes out every time
    expect(Object.keys(after[0] ?? {}).sort()).toEqual([
      "clamp_expression",
      "expression_gain",
      "retarget_pose",
      "transfer_gaze",
      "type",
    ]);
  });
});

describe("frames and errors", () => {
  it("dispatches frames with a round trip measured from the landmark send", async () => {
    let ms = 0;
    const socket = new FakeSocket();
    const frames: Array<{ frame: FrameMsg; rtt: number | null }> = [];
    const conn = new EngineConnection(
      "ws://host/ws",
      () => socket,
      {},
      { onFrame: (frame, rtt) => frames.push({ frame, rtt }) },
      () => ms,
    );
    const promise = conn.connect();
    socket.open();
    socket.reply(readyFor(socket));
    await promise;
    conn.sendLandmarks({ t: 0.04, pts: new Array(136).fill(0), w: 64, h: 64 });
    ms = 7;
    socket.reply({
      type: "frame",
      t: 0.04,
      nmfc_png: "aGk=",
      mouth_roi: [1, 2, 16, 16],
      latency_ms: 3.0,
      stale: false,
    });
    expect(frames).toHaveLength(1);
    expect(frames[0]?.rtt).toBe(7);
    expect(conn.landmarksSent).toBe(1);
  });

  it("reports unsolicited frames with an unknown timestamp as rtt null", async () => {
    const { socket, frames, promise } = connected();
    await promise;
    socket.reply({
      type: "frame",
      t: 9.9,
      mouth_roi: [0, 0, 8, 8],
      latency_ms: 1.0,
      stale: true,
    });
    expect(frames[0]?.rtt).toBeNull();
  });

  it("shows engine errors in the banner and keeps the session alive", async () => {
    const { conn, socket, errors, promise } = connected();
    await promise;
    socket.reply({ type: "error", code: "degenerate", msg: "flat landmarks", t: 0.2 });
    expect(errors).toHaveLength(1);
    expect(conn.errorBanner).toBe("degenerate: flat landmarks");
    expect(conn.status).toBe("ready");
  });

  it("notes unparseable server messages without crashing", async () => {
    const { conn, socket, promise } = connected();
    await promise;
    socket.reply({ type: "mystery" });
    expect(conn.errorBanner).toContain("unrecognized server message");
    expect(conn.status).toBe("ready");
  });
});

describe("teardown and reconnect", () => {
  it("bye resolves on the closing ready", async () => {
    const { conn, socket, promise } = connected();
    const ready = await promise;
    const byePromise = conn.bye();
    const last = socket.sentJson().pop();
    expect(last).toEqual({ type: "bye" });
    socket.reply({ ...readyFor(socket), session_id: ready.session_id });
    const ack = await byePromise;
    expect(ack.session_id).toBe(ready.session_id);
  });

  it("a second connection gets a fresh session", async () => {
    const factorySockets: FakeSocket[] = [];
    const factory = () => {
      const s = new FakeSocket();
      factorySockets.push(s);
      return s;
    };
    const first = new EngineConnection("ws://host/ws", factory);
    const p1 = first.connect();
    factorySockets[0]?.open();
    factorySockets[0]?.reply(readyFor(factorySockets[0]));
    const r1 = await p1;
    first.close();
    expect(first.status).toBe("closed");

    const second = new EngineConnection("ws://host/ws", factory);
    const p2 = second.connect();
    factorySockets[1]?.open();
    factorySockets[1]?.reply(readyFor(factorySockets[1]));
    const r2 = await p2;
    expect(r2.session_id).not.toBe(r1.session_id);
  });

  it("close rejects whatever is still pending", async () => {
    const { conn, socket, promise } = connected();
    await promise;
    const dangling = conn.sendPolicy(POLICY_DEFAULTS);
    const expectation = expect(dangling).rejects.toThrow(/closed/);
    socket.close();
    await expectation;
    expect(conn.status).toBe("closed");
  });
});
