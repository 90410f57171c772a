import { describe, expect, it } from "vitest";
import { FrameMsg } from "../src/schemas.js";
import { Triptych } from "../src/triptych.js";

function frame(t: number, extra: Partial<FrameMsg> = {}): FrameMsg {
  return {
    type: "frame",
    t,
    nmfc_png: `nmfc-${t}`,
    gaze_png: `gaze-${t}`,
    mouth_roi: [10, 20, 32, 32],
    latency_ms: 4.2,
    stale: false,
    ...extra,
  };
}

describe("update accounting", () => {
  it("one render per offered frame when the consumer keeps up", () => {
    const tri = new Triptych(() => 0);
    for (let i = 0; i < 100; i += 1) {
      tri.offer(frame(i * 0.05));
      expect(tri.render()).toBe(true);
    }
    expect(tri.updates).toBe(100);
    expect(tri.dropped).toBe(0);
    expect(tri.render()).toBe(false); // nothing pending
  });

  it("keeps only the latest frame under backpressure", () => {
    const tri = new Triptych(() => 0);
    tri.offer(frame(0.05));
    tri.offer(frame(0.1));
    tri.offer(frame(0.15));
    expect(tri.render()).toBe(true);
    expect(tri.view?.t).toBe(0.15);
    expect(tri.updates).toBe(1);
    expect(tri.dropped).toBe(2);
  });
});

describe("panel labelling", () => {
  it("labels the right panel as conditioning preview without neural output", () => {
    const tri = new Triptych(() => 0);
    tri.offer(frame(1));
    tri.render();
    expect(tri.view?.outputLabel).toBe("conditioning preview");
    expect(tri.view?.outputPng).toBeNull();
  });

  it("labels the right panel as output when the frame carries one", () => {
    const tri = new Triptych(() => 0);
    tri.offer(frame(1, { output_png: "rendered" }));
    tri.render();
    expect(tri.view?.outputLabel).toBe("output");
    expect(tri.view?.outputPng).toBe("rendered");
  });

  it("surfaces the stale flag", () => {
    const tri = new Triptych(() => 0);
    tri.offer(frame(1, { stale: true }));
    tri.render();
    expect(tri.view?.stale).toBe(true);
    expect(tri.overlayText()).toContain("stale");
  });
});

describe("stats", () => {
  it("reports fps over the draw window", () => {
    let ms = 0;
    const tri = new Triptych(() => ms);
    for (let i = 0; i < 10; i += 1) {
      ms = i * 100; // 10 draws per second
      tri.offer(frame(i));
      tri.render();
    }
    expect(tri.fps()).toBeCloseTo(10, 5);
  });

  it("computes the median round trip for odd and even counts", () => {
    const tri = new Triptych(() => 0);
    expect(tri.medianRttMs()).toBeNull();
    tri.offer(frame(1), 10);
    tri.offer(frame(2), 30);
    tri.offer(frame(3), 20);
    expect(tri.medianRttMs()).toBe(20);
    tri.offer(frame(4), 40);
    expect(tri.medianRttMs()).toBe(25);
  });

  it("renders an overlay line with engine latency and rtt", () => {
    const tri = new Triptych(() => 0);
    expect(tri.overlayText()).toBe("waiting for frames");
    tri.offer(frame(1), 12);
    tri.render();
    expect(tri.overlayText()).toContain("engine 4.2 ms");
    expect(tri.overlayText()).toContain("rtt 12.0 ms");
  });
});
