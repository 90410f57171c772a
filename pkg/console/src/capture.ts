import { LandmarkSample } from "./schemas.js";

export const MAX_SEND_RATE = 30; // messages per second
export const NO_FACE_AFTER_MS = 1000;
const RATE_EPSILON_MS = 1e-6;

// A landmark source pushes one detection per camera or replay tick; null
// means the tick produced no face.
export interface LandmarkSource {
  start(onTick: (sample: LandmarkSample | null) => void): void;
  stop(): void;
}

export interface CaptureOptions {
  maxRate?: number;
  noFaceAfterMs?: number;
  now?: () => number;
  onSent?: (sample: LandmarkSample) => void;
}

// Sits between a landmark source and the engine connection. Caps the send
// rate regardless of camera frame rate, drops out-of-order timestamps, and
// raises the no-face indicator after a second without a detection. With
// freeze engaged the last seen landmarks are held, so the rendered head
// stays put while the operator moves.
export class CaptureLoop {
  noFace = false;
  frozen = false;
  sent = 0;
  droppedByRate = 0;
  droppedByOrder = 0;

  private readonly source: LandmarkSource;
  private readonly sink: (sample: LandmarkSample) => void;
  private readonly maxRate: number;
  private readonly noFaceAfterMs: number;
  private readonly now: () => number;
  private readonly onSent?: (sample: LandmarkSample) => void;
  private running = false;
  private lastSentWall: number | null = null;
  private lastFaceWall: number | null = null;
  private lastT: number | null = null;
  private held: LandmarkSample | null = null;

  constructor(
    source: LandmarkSource,
    sink: (sample: LandmarkSample) => void,
    opts: CaptureOptions = {},
  ) {
    this.source = source;
    this.sink = sink;
    this.maxRate = opts.maxRate ?? MAX_SEND_RATE;
    this.noFaceAfterMs = opts.noFaceAfterMs ?? NO_FACE_AFTER_MS;
    this.now = opts.now ?? (() => Date.now());
    this.onSent = opts.onSent;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.lastFaceWall = this.now();
    this.source.start((sample) => this.tick(sample));
  }

  stop(): void {
    if (!this.running) return;
    this.running = false;
    this.source.stop();
  }

  setFrozen(frozen: boolean): void {
    this.frozen = frozen;
    if (!frozen) this.held = null;
  }

  tick(sample: LandmarkSample | null): void {
    if (!this.running) return;
    const wall = this.now();
    if (sample === null) {
      if (
        this.lastFaceWall === null ||
        wall - this.lastFaceWall >= this.noFaceAfterMs
      ) {
        this.noFace = true;
      }
      return;
    }
    this.lastFaceWall = wall;
    this.noFace = false;
    if (this.lastT !== null && sample.t <= this.lastT) {
      this.droppedByOrder += 1;
      return;
    }
    if (
      this.lastSentWall !== null &&
      (wall - this.lastSentWall) * this.maxRate < 1000 - RATE_EPSILON_MS
    ) {
      this.droppedByRate += 1;
      return;
    }
    let outgoing = sample;
    if (this.frozen) {
      if (this.held === null) this.held = sample;
      outgoing = { ...this.held, t: sample.t };
    } else {
      this.held = null;
    }
    this.lastT = sample.t;
    this.lastSentWall = wall;
    this.sink(outgoing);
    this.sent += 1;
    this.onSent?.(outgoing);
  }
}
