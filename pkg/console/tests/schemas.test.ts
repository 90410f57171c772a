import { describe, expect, it } from "vitest";
import {
  GAIN_MAX,
  POLICY_DEFAULTS,
  byeMessage,
  helloMessage,
  landmarksMessage,
  parseServerMessage,
  policyMessage,
  ProfileListSchema,
} from "../src/schemas.js";

const READY = {
  type: "ready",
  session_id: "abc123",
  model: "synthetic:3",
  profile_label: "live",
  width: 256,
  height: 256,
  k_id: 20,
  k_exp: 20,
  raw_frames: false,
  renderer: "conditioning_only",
};

describe("server message parsing", () => {
  it("accepts a ready message", () => {
    const msg = parseServerMessage(JSON.stringify(READY));
    expect(msg.type).toBe("ready");
    if (msg.type === "ready") expect(msg.session_id).toBe("abc123");
  });

  it("accepts a ready message without profile_label", () => {
    const { profile_label, ...rest } = READY;
    const msg = parseServerMessage(JSON.stringify(rest));
    expect(msg.type).toBe("ready");
  });

  it("accepts the minimal ready used to ack policy and bye", () => {
    const msg = parseServerMessage(
      JSON.stringify({
        type: "ready",
        session_id: "abc123",
        raw_frames: false,
        renderer: "conditioning_only",
      }),
    );
    expect(msg.type).toBe("ready");
    if (msg.type === "ready") expect(msg.model).toBeUndefined();
  });

  it("accepts a frame with optional panels missing", () => {
    const msg = parseServerMessage(
      JSON.stringify({
        type: "frame",
        t: 0.04,
        nmfc_png: "aGk=",
        mouth_roi: [10, 20, 30, 30],
        latency_ms: 3.5,
        stale: false,
      }),
    );
    expect(msg.type).toBe("frame");
    if (msg.type === "frame") {
      expect(msg.output_png).toBeUndefined();
      expect(msg.mouth_roi).toEqual([10, 20, 30, 30]);
    }
  });

  it("accepts an error and rejects unknown codes", () => {
    const msg = parseServerMessage(
      JSON.stringify({ type: "error", code: "degenerate", msg: "flat face", t: 1.0 }),
    );
    expect(msg.type).toBe("error");
    expect(() =>
      parseServerMessage(JSON.stringify({ type: "error", code: "mystery", msg: "x" })),
    ).toThrow();
  });

  it("rejects unknown message types and malformed json", () => {
    expect(() => parseServerMessage(JSON.stringify({ type: "pong" }))).toThrow();
    expect(() => parseServerMessage("not json")).toThrow();
  });

  it("parses the profile listing", () => {
    const parsed = ProfileListSchema.parse([
      { label: "live", model_name: "synthetic:3", file: "/p/live.json" },
    ]);
    expect(parsed[0]?.label).toBe("live");
  });
});

describe("client message builders", () => {
  it("hello carries defaults and omits unset fields", () => {
    const msg = helloMessage();
    expect(msg).toEqual({
      type: "hello",
      settings: { raw_frames: false, renderer: "conditioning_only" },
    });
    const withProfile = helloMessage({ profileLabel: "live", model: "m" });
    expect(withProfile.profile_label).toBe("live");
    expect(withProfile.model).toBe("m");
  });

  it("landmarks carries the sample and omits absent iris", () => {
    const pts = Array.from({ length: 136 }, (_, i) => i * 0.5);
    const msg = landmarksMessage({ t: 1.25, pts, w: 640, h: 480 });
    expect(msg.t).toBe(1.25);
    expect(msg.pts).toHaveLength(136);
    expect("iris" in msg).toBe(false);
    const withIris = landmarksMessage({ t: 1, pts, iris: [1, 2, 3, 4], w: 64, h: 64 });
    expect(withIris.iris).toEqual([1, 2, 3, 4]);
  });

  it("policy sends the full field set and clamps the gain to the slider range", () => {
    const msg = policyMessage({ ...POLICY_DEFAULTS, expressionGain: 3.5 });
    expect(msg).toEqual({
      type: "policy",
      retarget_pose: true,
      expression_gain: GAIN_MAX,
      transfer_gaze: true,
      clamp_expression: true,
    });
    const low = policyMessage({ ...POLICY_DEFAULTS, expressionGain: -1 });
    expect(low.expression_gain).toBe(0);
  });

  it("bye is bare", () => {
    expect(byeMessage()).toEqual({ type: "bye" });
  });
});
