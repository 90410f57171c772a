import {
  ErrorMsg,
  FrameMsg,
  HelloOptions,
  LandmarkSample,
  PolicyControls,
  POLICY_DEFAULTS,
  ReadyMsg,
  byeMessage,
  helloMessage,
  landmarksMessage,
  parseServerMessage,
  policyMessage,
} from "./schemas.js";

const HANDSHAKE_TIMEOUT_MS = 2000;

// Minimal socket surface shared by browser WebSocket and the ws package.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(
    type: "open" | "message" | "close" | "error",
    listener: (event: any) => void,
  ): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus =
  | "idle"
  | "connecting"
  | "ready"
  | "closed"
  | "error";

export interface ConnectionEvents {
  onFrame?: (frame: FrameMsg, rttMs: number | null) => void;
  onError?: (error: ErrorMsg) => void;
  onStatus?: (status: ConnectionStatus) => void;
  onPolicyAck?: (policy: PolicyControls) => void;
}

interface ReadyWaiter {
  kind: "hello" | "policy" | "bye";
  policy?: PolicyControls;
  resolve?: (msg: ReadyMsg) => void;
  reject?: (err: Error) => void;
}

// One EngineConnection is one engine session: connect() opens a socket and
// performs the hello/ready handshake, close() or a reconnect gives up the
// session id. The engine acknowledges hello, policy, and bye each with a
// ready message, in order, so acks are matched FIFO against what we sent.
export class EngineConnection {
  readonly url: string;
  status: ConnectionStatus = "idle";
  ready: ReadyMsg | null = null;
  sessionId: string | null = null;
  lastAckedPolicy: PolicyControls | null = null;
  errorBanner: string | null = null;
  policySent = 0;
  landmarksSent = 0;

  private readonly factory: SocketFactory;
  private readonly hello: HelloOptions;
  private readonly events: ConnectionEvents;
  private readonly now: () => number;
  private socket: SocketLike | null = null;
  private waiters: ReadyWaiter[] = [];
  private sendTimes = new Map<number, number>();

  constructor(
    url: string,
    factory: SocketFactory,
    hello: HelloOptions = {},
    events: ConnectionEvents = {},
    now: () => number = () => Date.now(),
  ) {
    this.url = url;
    this.factory = factory;
    this.hello = hello;
    this.events = events;
    this.now = now;
  }

  connect(timeoutMs: number = HANDSHAKE_TIMEOUT_MS): Promise<ReadyMsg> {
    if (this.socket !== null) throw new Error("already connected");
    this.setStatus("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    return new Promise<ReadyMsg>((resolve, reject) => {
      const waiter: ReadyWaiter = {
        kind: "hello",
        resolve: (msg) => {
          clearTimeout(timer);
          resolve(msg);
        },
        reject: (err) => {
          clearTimeout(timer);
          reject(err);
        },
      };
      const timer = setTimeout(() => {
        this.errorBanner = "handshake timed out";
        this.setStatus("error");
        this.waiters = this.waiters.filter((w) => w !== waiter);
        reject(new Error("handshake timed out"));
        socket.close();
      }, timeoutMs);
      this.waiters.push(waiter);
      socket.addEventListener("open", () => {
        socket.send(JSON.stringify(helloMessage(this.hello)));
      });
      socket.addEventListener("message", (event) => {
        this.handleMessage(String(event.data));
      });
      socket.addEventListener("error", () => {
        this.failWaiters(new Error("socket error"));
        this.errorBanner = "socket error";
        this.setStatus("error");
      });
      socket.addEventListener("close", () => {
        this.socket = null;
        this.failWaiters(new Error("socket closed"));
        if (this.status !== "error") this.setStatus("closed");
      });
    });
  }

  sendLandmarks(sample: LandmarkSample): void {
    const socket = this.requireSocket();
    this.sendTimes.set(sample.t, this.now());
    socket.send(JSON.stringify(landmarksMessage(sample)));
    this.landmarksSent += 1;
  }

  // Exactly one policy message per call; the returned promise resolves when
  // the engine acknowledges it.
  sendPolicy(policy: PolicyControls): Promise<ReadyMsg> {
    const socket = this.requireSocket();
    const payload = JSON.stringify(policyMessage(policy));
    return new Promise<ReadyMsg>((resolve, reject) => {
      this.waiters.push({ kind: "policy", policy: { ...policy }, resolve, reject });
      socket.send(payload);
      this.policySent += 1;
    });
  }

  bye(): Promise<ReadyMsg> {
    const socket = this.requireSocket();
    return new Promise<ReadyMsg>((resolve, reject) => {
      this.waiters.push({ kind: "bye", resolve, reject });
      socket.send(JSON.stringify(byeMessage()));
    });
  }

  close(): void {
    if (this.socket !== null) this.socket.close();
    this.socket = null;
  }

  private requireSocket(): SocketLike {
    if (this.socket === null || this.status !== "ready") {
      throw new Error("not connected");
    }
    return this.socket;
  }

  private handleMessage(data: string): void {
    let msg;
    try {
      msg = parseServerMessage(data);
    } catch (err) {
      this.errorBanner = `unrecognized server message: ${err}`;
      return;
    }
    if (msg.type === "ready") {
      const waiter = this.waiters.shift();
      if (waiter === undefined) return;
      if (waiter.kind === "hello") {
        this.ready = msg;
        this.sessionId = msg.session_id;
        this.lastAckedPolicy = { ...POLICY_DEFAULTS };
        this.errorBanner = null;
        this.setStatus("ready");
      } else if (waiter.kind === "policy" && waiter.policy !== undefined) {
        this.lastAckedPolicy = waiter.policy;
        this.events.onPolicyAck?.(waiter.policy);
      }
      waiter.resolve?.(msg);
    } else if (msg.type === "frame") {
      const sentAt = this.sendTimes.get(msg.t);
      this.sendTimes.delete(msg.t);
      const rtt = sentAt === undefined ? null : this.now() - sentAt;
      this.events.onFrame?.(msg, rtt);
    } else {
      this.errorBanner = `${msg.code}: ${msg.msg}`;
      this.events.onError?.(msg);
    }
  }

  private failWaiters(err: Error): void {
    const pending = this.waiters;
    this.waiters = [];
    for (const waiter of pending) waiter.reject?.(err);
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }
}
