import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { parseReplay, ReplaySource, serializeReplay } from "../src/replay.js";
import { LandmarkSample } from "../src/schemas.js";

function line(t: number, fill = 0.5): string {
  return JSON.stringify({
    t,
    w: 640,
    h: 480,
    pts: new Array(136).fill(fill),
    iris: null,
  });
}

describe("parseReplay", () => {
  it("reads one sample per line and skips blanks", () => {
    const text = [line(0.0), "", line(0.04), "  ", line(0.08)].join("\n");
    const samples = parseReplay(text);
    expect(samples.map((s) => s.t)).toEqual([0.0, 0.04, 0.08]);
    expect(samples[0]?.pts).toHaveLength(136);
    expect(samples[0]?.iris).toBeUndefined();
  });

  it("keeps iris values when present", () => {
    const obj = { t: 0, w: 64, h: 64, pts: new Array(136).fill(1), iris: [1, 2, 3, 4] };
    const samples = parseReplay(JSON.stringify(obj));
    expect(samples[0]?.iris).toEqual([1, 2, 3, 4]);
  });

  it("reports the offending line number", () => {
    const text = [line(0), '{"t": 1, "w": 640, "h": 480, "pts": [1, 2]}'].join("\n");
    expect(() => parseReplay(text)).toThrow(/line 2/);
  });

  it("rejects an empty file", () => {
    expect(() => parseReplay("\n\n")).toThrow(/no samples/);
  });

  it("round-trips through serializeReplay", () => {
    const samples = parseReplay([line(0.0), line(0.04)].join("\n"));
    expect(parseReplay(serializeReplay(samples))).toEqual(samples);
  });
});

describe("ReplaySource", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  function samples(n: number, dt = 0.04): LandmarkSample[] {
    return Array.from({ length: n }, (_, i) => ({
      t: i * dt,
      pts: new Array<number>(136).fill(i),
      w: 640,
      h: 480,
    }));
  }

  it("emits at the requested rate with original timestamps", () => {
    const src = new ReplaySource(samples(5), { rate: 20 });
    const got: Array<{ t: number; at: number }> = [];
    const start = Date.now();
    src.start((s) => {
      if (s !== null) got.push({ t: s.t, at: Date.now() - start });
    });
    vi.advanceTimersByTime(1000);
    expect(got.map((g) => g.t)).toEqual([0, 0.04, 0.08, 0.12, 0.16]);
    expect(got.map((g) => g.at)).toEqual([0, 50, 100, 150, 200]);
  });

  it("stops at the end when not looping", () => {
    const src = new ReplaySource(samples(3), { rate: 100 });
    let count = 0;
    src.start(() => {
      count += 1;
    });
    vi.advanceTimersByTime(5000);
    expect(count).toBe(3);
  });

  it("keeps timestamps monotonic across loop passes", () => {
    const src = new ReplaySource(samples(3), { rate: 100, loop: true });
    const ts: number[] = [];
    src.start((s) => {
      if (s !== null) ts.push(s.t);
    });
    vi.advanceTimersByTime(75); // 8 emissions at 10 ms spacing
    src.stop();
    expect(ts.length).toBe(8);
    for (let i = 1; i < ts.length; i += 1) {
      expect(ts[i]).toBeGreaterThan(ts[i - 1] ?? Infinity);
    }
  });

  it("paces by file timestamps when no rate is given", () => {
    const src = new ReplaySource(samples(4, 0.1)); // 10 fps recording
    const at: number[] = [];
    const start = Date.now();
    src.start(() => {
      at.push(Date.now() - start);
    });
    vi.advanceTimersByTime(1000);
    expect(at).toEqual([0, 100, 200, 300]);
  });

  it("can be stopped mid-flight", () => {
    const src = new ReplaySource(samples(10), { rate: 10 });
    let count = 0;
    src.start(() => {
      count += 1;
    });
    vi.advanceTimersByTime(250);
    src.stop();
    vi.advanceTimersByTime(2000);
    expect(count).toBe(3);
  });
});
