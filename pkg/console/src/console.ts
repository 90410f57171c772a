import { CaptureLoop, LandmarkSource } from "./capture.js";
import {
  ConnectionStatus,
  EngineConnection,
  SocketFactory,
} from "./connection.js";
import {
  GAIN_MAX,
  GAIN_MIN,
  HelloOptions,
  LandmarkSample,
  PolicyControls,
  POLICY_DEFAULTS,
} from "./schemas.js";
import { serializeReplay } from "./replay.js";
import { Triptych } from "./triptych.js";

export interface ConsoleOptions {
  url: string;
  socketFactory: SocketFactory;
  source: LandmarkSource;
  hello?: HelloOptions;
  now?: () => number;
}

export interface ConsoleState {
  connection: ConnectionStatus;
  sessionId: string | null;
  profile: string | null;
  controls: PolicyControls;
  poseFreeze: boolean;
  ackedPolicy: PolicyControls | null;
  noFace: boolean;
  recording: boolean;
  errorBanner: string | null;
  updates: number;
  fps: number;
  medianRttMs: number | null;
}

// Wires connection, capture and triptych together and owns the control
// state. Every policy control change sends exactly one policy message; the
// pose freeze is client-side (held landmarks) and sends none.
export class ConsoleApp {
  readonly connection: EngineConnection;
  readonly capture: CaptureLoop;
  readonly triptych: Triptych;

  recording = false;
  private controls: PolicyControls = { ...POLICY_DEFAULTS };
  private poseFreeze = false;
  private recorded: LandmarkSample[] = [];

  constructor(opts: ConsoleOptions) {
    const now = opts.now ?? (() => Date.now());
    this.triptych = new Triptych(now);
    this.connection = new EngineConnection(
      opts.url,
      opts.socketFactory,
      opts.hello ?? {},
      {
        onFrame: (frame, rtt) => {
          this.triptych.offer(frame, rtt);
        },
      },
      now,
    );
    this.capture = new CaptureLoop(
      opts.source,
      (sample) => this.connection.sendLandmarks(sample),
      {
        now,
        onSent: (sample) => {
          if (this.recording) this.recorded.push(sample);
        },
      },
    );
  }

  async start(): Promise<void> {
    await this.connection.connect();
    this.capture.start();
  }

  async stop(): Promise<void> {
    this.capture.stop();
    if (this.connection.status === "ready") {
      await this.connection.bye();
    }
    this.connection.close();
  }

  setExpressionGain(value: number): Promise<unknown> {
    const clamped = Math.min(GAIN_MAX, Math.max(GAIN_MIN, value));
    return this.applyControls({ ...this.controls, expressionGain: clamped });
  }

  setRetargetPose(on: boolean): Promise<unknown> {
    return this.applyControls({ ...this.controls, retargetPose: on });
  }

  setTransferGaze(on: boolean): Promise<unknown> {
    return this.applyControls({ ...this.controls, transferGaze: on });
  }

  setClampExpression(on: boolean): Promise<unknown> {
    return this.applyControls({ ...this.controls, clampExpression: on });
  }

  setPoseFreeze(on: boolean): void {
    this.poseFreeze = on;
    this.capture.setFrozen(on);
  }

  setRecording(on: boolean): void {
    if (on && !this.recording) this.recorded = [];
    this.recording = on;
  }

  exportReplay(): string {
    return serializeReplay(this.recorded);
  }

  recordedCount(): number {
    return this.recorded.length;
  }

  state(): ConsoleState {
    return {
      connection: this.connection.status,
      sessionId: this.connection.sessionId,
      profile: this.connection.ready?.profile_label ?? null,
      controls: { ...this.controls },
      poseFreeze: this.poseFreeze,
      ackedPolicy:
        this.connection.lastAckedPolicy === null
          ? null
          : { ...this.connection.lastAckedPolicy },
      noFace: this.capture.noFace,
      recording: this.recording,
      errorBanner: this.connection.errorBanner,
      updates: this.triptych.updates,
      fps: this.triptych.fps(),
      medianRttMs: this.triptych.medianRttMs(),
    };
  }

  private applyControls(next: PolicyControls): Promise<unknown> {
    this.controls = next;
    return this.connection.sendPolicy(next);
  }
}
