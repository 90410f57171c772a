// Browser entry point. Everything with behavior worth testing lives in the
// sibling modules; this file is lookup-and-listen glue between them and the
// DOM. Landmarks come from a replay file; a live camera detector can be
// plugged in by handing connect() any other LandmarkSource.

import { LandmarkSource } from "../capture.js";
import { ConsoleApp } from "../console.js";
import { fetchProfiles } from "../profiles.js";
import { parseReplay, ReplaySource } from "../replay.js";
import { GAIN_MAX, GAIN_MIN, LandmarkSample } from "../schemas.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

const hostInput = el<HTMLInputElement>("engine-host");
const profileSelect = el<HTMLSelectElement>("profile");
const refreshBtn = el<HTMLButtonElement>("refresh-profiles");
const fileInput = el<HTMLInputElement>("replay-file");
const rateInput = el<HTMLInputElement>("replay-rate");
const loopInput = el<HTMLInputElement>("replay-loop");
const replayInfo = el<HTMLElement>("replay-info");
const connectBtn = el<HTMLButtonElement>("connect");
const disconnectBtn = el<HTMLButtonElement>("disconnect");
const statusChip = el<HTMLElement>("status");
const freezeInput = el<HTMLInputElement>("pose-freeze");
const gainInput = el<HTMLInputElement>("expression-gain");
const gainValue = el<HTMLElement>("gain-value");
const gazeInput = el<HTMLInputElement>("transfer-gaze");
const retargetInput = el<HTMLInputElement>("retarget-pose");
const clampInput = el<HTMLInputElement>("clamp-expression");
const recordInput = el<HTMLInputElement>("record");
const exportBtn = el<HTMLButtonElement>("export-replay");
const sourceCanvas = el<HTMLCanvasElement>("source-panel");
const nmfcImg = el<HTMLImageElement>("nmfc-panel");
const gazeImg = el<HTMLImageElement>("gaze-panel");
const outputImg = el<HTMLImageElement>("output-panel");
const outputCaption = el<HTMLElement>("output-label");
const statsLine = el<HTMLElement>("stats");
const banner = el<HTMLElement>("error-banner");

let app: ConsoleApp | null = null;
let samples: LandmarkSample[] = [];

gainInput.min = String(GAIN_MIN);
gainInput.max = String(GAIN_MAX);

function httpBase(): string {
  return `http://${hostInput.value}`;
}

function wsUrl(): string {
  return `ws://${hostInput.value}/ws`;
}

function showBanner(text: string | null): void {
  banner.textContent = text ?? "";
  banner.hidden = text === null;
}

function setControlsEnabled(on: boolean): void {
  for (const input of [
    freezeInput,
    gainInput,
    gazeInput,
    retargetInput,
    clampInput,
    recordInput,
    exportBtn,
    disconnectBtn,
  ]) {
    input.disabled = !on;
  }
}

function drawSource(sample: LandmarkSample | null): void {
  if (sample === null) return;
  const ctx = sourceCanvas.getContext("2d");
  if (ctx === null) return;
  const sx = sourceCanvas.width / sample.w;
  const sy = sourceCanvas.height / sample.h;
  ctx.fillStyle = "#10151d";
  ctx.fillRect(0, 0, sourceCanvas.width, sourceCanvas.height);
  ctx.fillStyle = "#9ecbff";
  for (let i = 0; i + 1 < sample.pts.length; i += 2) {
    ctx.fillRect((sample.pts[i] ?? 0) * sx - 1, (sample.pts[i + 1] ?? 0) * sy - 1, 2, 2);
  }
  if (sample.iris !== undefined && sample.iris !== null) {
    ctx.fillStyle = "#ffd166";
    for (let i = 0; i + 1 < sample.iris.length; i += 2) {
      ctx.fillRect((sample.iris[i] ?? 0) * sx - 2, (sample.iris[i + 1] ?? 0) * sy - 2, 4, 4);
    }
  }
}

// Mirrors whatever the capture loop sees onto the source panel.
function paintingSource(inner: LandmarkSource): LandmarkSource {
  return {
    start(onTick) {
      inner.start((sample) => {
        drawSource(sample);
        onTick(sample);
      });
    },
    stop() {
      inner.stop();
    },
  };
}

function setPanel(img: HTMLImageElement, png: string | null): void {
  if (png !== null) img.src = `data:image/png;base64,${png}`;
}

async function refreshProfiles(): Promise<void> {
  try {
    const profiles = await fetchProfiles(httpBase());
    profileSelect.innerHTML = "";
    for (const profile of profiles) {
      const opt = document.createElement("option");
      opt.value = profile.label;
      opt.textContent = `${profile.label} (${profile.model_name})`;
      profileSelect.appendChild(opt);
    }
    showBanner(null);
  } catch (err) {
    showBanner(`profile listing failed: ${err}`);
  }
}

async function connect(): Promise<void> {
  if (app !== null || samples.length === 0) return;
  const rate = Number(rateInput.value) > 0 ? Number(rateInput.value) : undefined;
  const opts = rate === undefined ? { loop: loopInput.checked } : { rate, loop: loopInput.checked };
  const next = new ConsoleApp({
    url: wsUrl(),
    socketFactory: (url) => new WebSocket(url),
    source: paintingSource(new ReplaySource(samples, opts)),
    hello: profileSelect.value === "" ? {} : { profileLabel: profileSelect.value },
  });
  connectBtn.disabled = true;
  try {
    await next.start();
  } catch (err) {
    showBanner(`connect failed: ${err}`);
    connectBtn.disabled = false;
    return;
  }
  app = next;
  showBanner(null);
  setControlsEnabled(true);
}

async function disconnect(): Promise<void> {
  if (app === null) return;
  const closing = app;
  app = null;
  setControlsEnabled(false);
  connectBtn.disabled = samples.length === 0;
  statusChip.textContent = "idle";
  try {
    await closing.stop();
  } catch {
    // socket may already be gone; nothing to clean up beyond close()
  }
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (file === undefined) return;
  try {
    samples = parseReplay(await file.text());
    replayInfo.textContent = `${samples.length} samples`;
    connectBtn.disabled = app !== null;
    showBanner(null);
  } catch (err) {
    samples = [];
    connectBtn.disabled = true;
    replayInfo.textContent = "";
    showBanner(`replay parse failed: ${err}`);
  }
});

refreshBtn.addEventListener("click", () => void refreshProfiles());
connectBtn.addEventListener("click", () => void connect());
disconnectBtn.addEventListener("click", () => void disconnect());

freezeInput.addEventListener("change", () => {
  app?.setPoseFreeze(freezeInput.checked);
});
gainInput.addEventListener("input", () => {
  gainValue.textContent = Number(gainInput.value).toFixed(2);
  app?.setExpressionGain(Number(gainInput.value)).catch(() => {});
});
gazeInput.addEventListener("change", () => {
  app?.setTransferGaze(gazeInput.checked).catch(() => {});
});
retargetInput.addEventListener("change", () => {
  app?.setRetargetPose(retargetInput.checked).catch(() => {});
});
clampInput.addEventListener("change", () => {
  app?.setClampExpression(clampInput.checked).catch(() => {});
});
recordInput.addEventListener("change", () => {
  app?.setRecording(recordInput.checked);
});
exportBtn.addEventListener("click", () => {
  if (app === null || app.recordedCount() === 0) return;
  const blob = new Blob([app.exportReplay()], { type: "application/x-ndjson" });
  const anchor = document.createElement("a");
  anchor.href = URL.createObjectURL(blob);
  anchor.download = "landmarks.jsonl";
  anchor.click();
  URL.revokeObjectURL(anchor.href);
});

function frameLoop(): void {
  if (app !== null) {
    if (app.triptych.render()) {
      const view = app.triptych.view;
      if (view !== null) {
        setPanel(nmfcImg, view.nmfcPng);
        setPanel(gazeImg, view.gazePng);
        setPanel(outputImg, view.outputPng ?? view.nmfcPng);
        outputCaption.textContent = view.outputLabel;
      }
    }
    const state = app.state();
    statusChip.textContent = state.connection;
    statsLine.textContent = [
      app.triptych.overlayText(),
      `${state.updates} updates`,
      `${app.triptych.dropped} dropped`,
      state.noFace ? "no face" : "",
      state.recording ? `rec ${app.recordedCount()}` : "",
    ]
      .filter((part) => part !== "")
      .join(" | ");
    showBanner(state.errorBanner);
  }
  requestAnimationFrame(frameLoop);
}

setControlsEnabled(false);
connectBtn.disabled = true;
gainValue.textContent = Number(gainInput.value).toFixed(2);
requestAnimationFrame(frameLoop);
