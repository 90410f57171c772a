import { z } from "zod";

// Messages the engine sends. Parsed strictly so a drifting server shows up
// as a schema error instead of silently missing fields.

// Acks for policy and bye carry only the session id, so everything past it
// is optional.
export const ReadySchema = z.object({
  type: z.literal("ready"),
  session_id: z.string(),
  model: z.string().optional(),
  profile_label: z.string().optional(),
  width: z.number().int().positive().optional(),
  height: z.number().int().positive().optional(),
  k_id: z.number().int().positive().optional(),
  k_exp: z.number().int().positive().optional(),
  raw_frames: z.boolean(),
  renderer: z.enum(["conditioning_only", "neural"]),
});

export const FrameSchema = z.object({
  type: z.literal("frame"),
  t: z.number(),
  nmfc_png: z.string().optional(),
  gaze_png: z.string().optional(),
  output_png: z.string().optional(),
  mouth_roi: z.tuple([
    z.number().int(),
    z.number().int(),
    z.number().int(),
    z.number().int(),
  ]),
  latency_ms: z.number(),
  stale: z.boolean(),
});

export const ErrorSchema = z.object({
  type: z.literal("error"),
  code: z.enum([
    "bad_message",
    "no_session",
    "not_found",
    "degenerate",
    "internal",
    "neural_timeout",
  ]),
  msg: z.string(),
  t: z.number().optional(),
});

export const ServerMessageSchema = z.discriminatedUnion("type", [
  ReadySchema,
  FrameSchema,
  ErrorSchema,
]);

export type ReadyMsg = z.infer<typeof ReadySchema>;
export type FrameMsg = z.infer<typeof FrameSchema>;
export type ErrorMsg = z.infer<typeof ErrorSchema>;
export type ServerMessage = z.infer<typeof ServerMessageSchema>;

export const ProfileSchema = z.object({
  label: z.string(),
  model_name: z.string(),
  file: z.string(),
});
export type Profile = z.infer<typeof ProfileSchema>;
export const ProfileListSchema = z.array(ProfileSchema);

// Messages the console sends. The engine validates these; builders keep the
// shapes in one place.

export interface SessionSettings {
  raw_frames: boolean;
  renderer: "conditioning_only" | "neural";
}

export interface HelloOptions {
  model?: string;
  profileLabel?: string;
  rawFrames?: boolean;
  renderer?: "conditioning_only" | "neural";
}

export function helloMessage(opts: HelloOptions = {}): Record<string, unknown> {
  const msg: Record<string, unknown> = {
    type: "hello",
    settings: {
      raw_frames: opts.rawFrames ?? false,
      renderer: opts.renderer ?? "conditioning_only",
    },
  };
  if (opts.model !== undefined) msg.model = opts.model;
  if (opts.profileLabel !== undefined) msg.profile_label = opts.profileLabel;
  return msg;
}

export interface LandmarkSample {
  t: number;
  pts: number[];
  iris?: number[];
  w: number;
  h: number;
}

export function landmarksMessage(s: LandmarkSample): Record<string, unknown> {
  const msg: Record<string, unknown> = {
    type: "landmarks",
    t: s.t,
    pts: s.pts,
    w: s.w,
    h: s.h,
  };
  if (s.iris !== undefined) msg.iris = s.iris;
  return msg;
}

// The engine replaces the whole policy on every policy message; omitted
// fields revert to defaults. The console therefore always sends the full
// set of fields.

export interface PolicyControls {
  retargetPose: boolean;
  expressionGain: number;
  transferGaze: boolean;
  clampExpression: boolean;
}

export const POLICY_DEFAULTS: PolicyControls = {
  retargetPose: true,
  expressionGain: 1.0,
  transferGaze: true,
  clampExpression: true,
};

export const GAIN_MIN = 0.0;
export const GAIN_MAX = 2.0;

export function policyMessage(p: PolicyControls): Record<string, unknown> {
  return {
    type: "policy",
    retarget_pose: p.retargetPose,
    expression_gain: Math.min(GAIN_MAX, Math.max(GAIN_MIN, p.expressionGain)),
    transfer_gaze: p.transferGaze,
    clamp_expression: p.clampExpression,
  };
}

export function byeMessage(): Record<string, unknown> {
  return { type: "bye" };
}

export function parseServerMessage(data: string): ServerMessage {
  return ServerMessageSchema.parse(JSON.parse(data));
}
