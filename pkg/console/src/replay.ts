import { z } from "zod";
import { LandmarkSource } from "./capture.js";
import { LandmarkSample } from "./schemas.js";

export const N_LANDMARK_VALUES = 136; // 68 points, x/y interleaved
export const IRIS_VALUES = 4; // left and right centers

const ReplayLineSchema = z.object({
  t: z.number().finite(),
  w: z.number().int().positive(),
  h: z.number().int().positive(),
  pts: z.array(z.number().finite()).length(N_LANDMARK_VALUES),
  iris: z.array(z.number().finite()).length(IRIS_VALUES).nullish(),
});

// Parses a landmark stream file: one JSON object per line, the format the
// engine's make-stream command writes and the recorder exports.
export function parseReplay(text: string): LandmarkSample[] {
  const samples: LandmarkSample[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i += 1) {
    const line = (lines[i] ?? "").trim();
    if (line === "") continue;
    let parsed;
    try {
      parsed = ReplayLineSchema.parse(JSON.parse(line));
    } catch (err) {
      throw new Error(`replay line ${i + 1}: ${err}`);
    }
    samples.push({
      t: parsed.t,
      pts: parsed.pts,
      iris: parsed.iris ?? undefined,
      w: parsed.w,
      h: parsed.h,
    });
  }
  if (samples.length === 0) throw new Error("replay file has no samples");
  return samples;
}

export function serializeReplay(samples: LandmarkSample[]): string {
  return (
    samples
      .map((s) =>
        JSON.stringify({
          t: s.t,
          w: s.w,
          h: s.h,
          pts: s.pts,
          iris: s.iris ?? null,
        }),
      )
      .join("\n") + "\n"
  );
}

export interface ReplayOptions {
  rate?: number; // messages per second; default paces by file timestamps
  loop?: boolean;
  now?: () => number;
}

// Plays parsed samples as a landmark source. Emission deadlines are computed
// from the start time, not chained timeouts, so pacing does not drift over a
// long session. Looping shifts timestamps forward to stay monotonic.
export class ReplaySource implements LandmarkSource {
  readonly samples: LandmarkSample[];
  index = 0;

  private readonly intervalMs: number;
  private readonly tSpan: number; // seconds one loop pass advances timestamps
  private readonly loop: boolean;
  private readonly now: () => number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private startedAt = 0;
  private emitted = 0;

  constructor(samples: LandmarkSample[], opts: ReplayOptions = {}) {
    if (samples.length === 0) throw new Error("replay needs samples");
    this.samples = samples;
    this.loop = opts.loop ?? false;
    this.now = opts.now ?? (() => Date.now());
    if (opts.rate !== undefined) {
      if (!(opts.rate > 0)) throw new Error("rate must be positive");
      this.intervalMs = 1000 / opts.rate;
    } else {
      this.intervalMs = medianIntervalMs(samples);
    }
    const first = samples[0];
    const last = samples[samples.length - 1];
    const fileDt = medianIntervalMs(samples) / 1000;
    this.tSpan =
      first !== undefined && last !== undefined
        ? last.t - first.t + fileDt
        : fileDt;
  }

  start(onTick: (sample: LandmarkSample | null) => void): void {
    if (this.timer !== null) return;
    this.startedAt = this.now();
    this.emitted = 0;
    this.index = 0;
    this.schedule(onTick);
  }

  stop(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  private schedule(onTick: (sample: LandmarkSample | null) => void): void {
    const deadline = this.startedAt + this.emitted * this.intervalMs;
    const delay = Math.max(0, deadline - this.now());
    this.timer = setTimeout(() => {
      this.timer = null;
      const pass = Math.floor(this.index / this.samples.length);
      if (pass > 0 && !this.loop) return;
      const sample = this.samples[this.index % this.samples.length];
      if (sample === undefined) return;
      onTick(
        pass === 0 ? sample : { ...sample, t: sample.t + pass * this.tSpan },
      );
      this.index += 1;
      this.emitted += 1;
      if (this.index < this.samples.length || this.loop) {
        this.schedule(onTick);
      }
    }, delay);
  }
}

function medianIntervalMs(samples: LandmarkSample[]): number {
  if (samples.length < 2) return 1000 / 25;
  const gaps: number[] = [];
  for (let i = 1; i < samples.length; i += 1) {
    const prev = samples[i - 1];
    const cur = samples[i];
    if (prev !== undefined && cur !== undefined) gaps.push(cur.t - prev.t);
  }
  gaps.sort((a, b) => a - b);
  const mid = gaps[Math.floor(gaps.length / 2)] ?? 0.04;
  return Math.max(1, mid * 1000);
}
