import { FrameMsg } from "./schemas.js";

const FPS_WINDOW = 60;
const RTT_WINDOW = 120;

export interface TriptychView {
  t: number;
  nmfcPng: string | null;
  gazePng: string | null;
  outputPng: string | null;
  // What the right panel shows: the neural output when present, otherwise
  // the conditioning itself, labelled so the operator knows the difference.
  outputLabel: "output" | "conditioning preview";
  mouthRoi: [number, number, number, number];
  latencyMs: number;
  stale: boolean;
}

// Holds at most one undrawn frame. The network side offers every frame; the
// render side consumes when it gets around to it. Under backpressure the
// pending frame is replaced, never queued, so the view stays current and
// capture is never blocked.
export class Triptych {
  updates = 0;
  dropped = 0;
  view: TriptychView | null = null;

  private pending: FrameMsg | null = null;
  private readonly now: () => number;
  private drawTimes: number[] = [];
  private rtts: number[] = [];

  constructor(now: () => number = () => Date.now()) {
    this.now = now;
  }

  offer(frame: FrameMsg, rttMs: number | null = null): void {
    if (this.pending !== null) this.dropped += 1;
    this.pending = frame;
    if (rttMs !== null) {
      this.rtts.push(rttMs);
      if (this.rtts.length > RTT_WINDOW) this.rtts.shift();
    }
  }

  // Consumes the pending frame into the view; returns whether anything new
  // was drawn.
  render(): boolean {
    if (this.pending === null) return false;
    const frame = this.pending;
    this.pending = null;
    this.view = {
      t: frame.t,
      nmfcPng: frame.nmfc_png ?? null,
      gazePng: frame.gaze_png ?? null,
      outputPng: frame.output_png ?? null,
      outputLabel: frame.output_png !== undefined ? "output" : "conditioning preview",
      mouthRoi: frame.mouth_roi,
      latencyMs: frame.latency_ms,
      stale: frame.stale,
    };
    this.updates += 1;
    this.drawTimes.push(this.now());
    if (this.drawTimes.length > FPS_WINDOW) this.drawTimes.shift();
    return true;
  }

  fps(): number {
    if (this.drawTimes.length < 2) return 0;
    const first = this.drawTimes[0];
    const last = this.drawTimes[this.drawTimes.length - 1];
    if (first === undefined || last === undefined || last <= first) return 0;
    return ((this.drawTimes.length - 1) * 1000) / (last - first);
  }

  medianRttMs(): number | null {
    if (this.rtts.length === 0) return null;
    const sorted = [...this.rtts].sort((a, b) => a - b);
    const mid = Math.floor(sorted.length / 2);
    const value =
      sorted.length % 2 === 1
        ? sorted[mid]
        : ((sorted[mid - 1] ?? 0) + (sorted[mid] ?? 0)) / 2;
    return value ?? null;
  }

  // One-line status for the latency overlay.
  overlayText(): string {
    if (this.view === null) return "waiting for frames";
    const rtt = this.medianRttMs();
    const parts = [
      `engine ${this.view.latencyMs.toFixed(1)} ms`,
      rtt === null ? "rtt n/a" : `rtt ${rtt.toFixed(1)} ms`,
      `${this.fps().toFixed(1)} fps`,
    ];
    if (this.view.stale) parts.push("stale");
    return parts.join(" | ");
  }
}
