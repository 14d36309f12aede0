// Entry point: wires the API client, stream, knobs and panels to the DOM.

import { ApiClient, FieldErrors } from "./api.js";
import { KNOBS, KnobSender } from "./knobs.js";
import { PsfGridPanel, Staleness, arrowsFrom, drawArrows } from "./panels.js";
import { encodePgm, testPattern } from "./pattern.js";
import { SessionAction, reduce } from "./status.js";
import { FrameMsg, StreamClient } from "./stream.js";
import { ParamsAck, UiSessionState, initialState } from "./types.js";

const PSF_GRID_N = 8;
const PSF_POLL_MS = 2000;
const DISP_POLL_MS = 700;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  api = new ApiClient("");
  state: UiSessionState = initialState(window.location.origin);
  sender: KnobSender;
  stream: StreamClient;

  video = el<HTMLCanvasElement>("video");
  overlay = el<HTMLCanvasElement>("overlay");
  statusChip = el<HTMLSpanElement>("status-chip");
  statsLine = el<HTMLSpanElement>("stats-line");
  knobsBox = el<HTMLDivElement>("knobs");
  psfBox = el<HTMLDivElement>("psf-panel");
  dispBox = el<HTMLDivElement>("disp-panel");

  psfPanel = new PsfGridPanel(el<HTMLDivElement>("psf-body"));
  psfStale = new Staleness(2000);
  dispStale = new Staleness(2000);
  sliders = new Map<string, { input: HTMLInputElement; value: HTMLSpanElement; error: HTMLSpanElement }>();
  lastFrame: FrameMsg | null = null;

  constructor() {
    this.sender = new KnobSender((updates) => void this.pushParams(updates));
    this.stream = new StreamClient({
      decode: async (frame) =>
        createImageBitmap(new Blob([frame.png], { type: "image/png" })),
      draw: (image, frame) => this.drawFrame(image as ImageBitmap, frame),
      onOpen: () => this.dispatch({ kind: "ws_open" }),
      onError: () => this.dispatch({ kind: "ws_error" }),
      onClose: () => this.dispatch({ kind: "ws_closed" }),
      onStats: (s) => this.dispatch({ kind: "stream_stats", ...s }),
    });
  }

  dispatch(action: SessionAction): void {
    this.state = reduce(this.state, action);
    this.renderState();
  }

  async pushParams(updates: Record<string, number>): Promise<void> {
    try {
      const ack = await this.api.putParams(updates);
      this.dispatch({ kind: "params_ack", params: ack });
    } catch (err) {
      if (err instanceof FieldErrors) {
        this.dispatch({ kind: "params_rejected", errors: err.errors });
      } else {
        this.dispatch({ kind: "ws_error" });
      }
    }
  }

  drawFrame(image: ImageBitmap, frame: FrameMsg): void {
    if (this.video.width !== frame.width || this.video.height !== frame.height) {
      this.video.width = frame.width;
      this.video.height = frame.height;
      this.overlay.width = frame.width;
      this.overlay.height = frame.height;
    }
    const ctx = this.video.getContext("2d");
    if (ctx) ctx.drawImage(image, 0, 0);
    image.close();
    this.lastFrame = frame;
  }

  // -- knobs ---------------------------------------------------------------

  buildKnobs(): void {
    for (const spec of KNOBS) {
      const row = document.createElement("div");
      row.className = "knob";
      const label = document.createElement("label");
      label.textContent = spec.label + (spec.unit ? ` (${spec.unit})` : "");
      const input = document.createElement("input");
      input.type = "range";
      input.min = String(spec.min);
      input.max = String(spec.max);
      input.step = String(spec.step);
      const value = document.createElement("span");
      value.className = "knob-value";
      const error = document.createElement("span");
      error.className = "knob-error";
      input.addEventListener("input", () => {
        this.sender.update(spec.path, Number(input.value));
      });
      input.addEventListener("change", () => this.sender.flush());
      row.append(label, input, value, error);
      this.knobsBox.appendChild(row);
      this.sliders.set(spec.path, { input, value, error });
    }
  }

  renderState(): void {
    const s = this.state;
    this.statusChip.textContent = s.status;
    this.statusChip.className = `chip chip-${s.status}`;
    const bits = [`${s.fps.toFixed(1)} fps`, `frame ${s.frameIndex}`];
    if (s.droppedFrames > 0) bits.push(`${s.droppedFrames} dropped`);
    if (s.decodeFailures > 0) bits.push(`${s.decodeFailures} decode failures`);
    this.statsLine.textContent = bits.join(" | ");
    if (s.params) {
      for (const spec of KNOBS) {
        const ui = this.sliders.get(spec.path);
        if (!ui) continue;
        const acked = (s.params as unknown as Record<string, number>)[spec.path];
        // knobs mirror the server ack; never left at an unacked drag position
        if (document.activeElement !== ui.input) {
          ui.input.value = String(acked);
        }
        ui.value.textContent = Number(acked).toFixed(3).replace(/\.?0+$/, "");
        ui.error.textContent = s.fieldErrors[spec.path] ?? "";
      }
    }
    this.psfBox.hidden = !s.overlays.psfGrid;
    this.dispBox.hidden = !s.overlays.displacement;
    if (!s.overlays.displacement) {
      const ctx = this.overlay.getContext("2d");
      if (ctx) ctx.clearRect(0, 0, this.overlay.width, this.overlay.height);
    }
  }

  // -- overlays --------------------------------------------------------------

  async pollDisplacement(): Promise<void> {
    if (this.state.overlays.displacement && this.state.status !== "error") {
      try {
        const field = await this.api.getDisplacement(16);
        this.dispStale.markUpdated(performance.now());
        const ctx = this.overlay.getContext("2d");
        if (ctx) {
          ctx.clearRect(0, 0, this.overlay.width, this.overlay.height);
          drawArrows(ctx, arrowsFrom(field));
        }
      } catch {
        // stale marker will grey the panel
      }
    }
    this.dispBox.classList.toggle("stale", this.dispStale.isStale(performance.now()));
    setTimeout(() => void this.pollDisplacement(), DISP_POLL_MS);
  }

  async pollPsfGrid(): Promise<void> {
    if (this.state.overlays.psfGrid && this.state.status !== "error") {
      const url = this.api.psfGridUrl(PSF_GRID_N);
      const img = new Image();
      await new Promise<void>((resolve) => {
        img.onload = () => {
          this.psfPanel.setImage(url, img.naturalWidth, img.naturalHeight, PSF_GRID_N);
          this.psfStale.markUpdated(performance.now());
          resolve();
        };
        img.onerror = () => resolve();
        img.src = url;
      });
    }
    this.psfPanel.setStale(this.psfStale.isStale(performance.now()));
    setTimeout(() => void this.pollPsfGrid(), PSF_POLL_MS);
  }

  hookPsfHover(): void {
    this.psfPanel.img.addEventListener("mousemove", (ev) => {
      const rect = this.psfPanel.img.getBoundingClientRect();
      if (rect.width === 0 || rect.height === 0) return;
      const x = ((ev.clientX - rect.left) / rect.width) * this.psfPanel.img.naturalWidth;
      const y = ((ev.clientY - rect.top) / rect.height) * this.psfPanel.img.naturalHeight;
      this.psfPanel.hover(x, y);
    });
    this.psfPanel.img.addEventListener("mouseleave", () => this.psfPanel.leave());
  }

  // -- sources ---------------------------------------------------------------

  async sendPattern(): Promise<void> {
    const w = this.state.params?.image_width ?? 256;
    const h = this.state.params?.image_height ?? 256;
    const pgm = encodePgm(testPattern(w, h), w, h);
    await this.api.postSource(pgm, "image/x-portable-graymap");
    this.dispatch({ kind: "source_selected", source: "pattern" });
  }

  async sendUpload(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    await this.api.postSource(bytes, file.type || "application/octet-stream");
    this.dispatch({ kind: "source_selected", source: "upload" });
  }

  async captureCamera(): Promise<void> {
    const media = await navigator.mediaDevices.getUserMedia({ video: true });
    const track = media.getVideoTracks()[0];
    try {
      const video = document.createElement("video");
      video.srcObject = media;
      await video.play();
      const canvas = document.createElement("canvas");
      canvas.width = this.state.params?.image_width ?? 256;
      canvas.height = this.state.params?.image_height ?? 256;
      const ctx = canvas.getContext("2d");
      if (!ctx) return;
      ctx.drawImage(video, 0, 0, canvas.width, canvas.height);
      const blob = await new Promise<Blob | null>((r) => canvas.toBlob(r, "image/png"));
      if (blob) {
        await this.api.postSource(new Uint8Array(await blob.arrayBuffer()), "image/png");
        this.dispatch({ kind: "source_selected", source: "camera" });
      }
    } finally {
      track.stop();
    }
  }

  snapshot(): void {
    this.video.toBlob((blob) => {
      if (!blob) return;
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = `turbsim-frame-${this.state.frameIndex}.png`;
      a.click();
      URL.revokeObjectURL(a.href);
    }, "image/png");
  }

  // -- startup ----------------------------------------------------------------

  connectSockets(): void {
    this.dispatch({ kind: "ws_connecting" });
    const stream = new WebSocket(this.api.streamUrl());
    this.stream.attach(stream as unknown as Parameters<StreamClient["attach"]>[0]);

    const events = new WebSocket(this.api.eventsUrl());
    events.onmessage = (ev) => {
      try {
        this.dispatch({ kind: "server_status", event: JSON.parse(String(ev.data)) });
      } catch {
        // malformed status is ignored; the next tick resends
      }
    };
  }

  async start(): Promise<void> {
    this.buildKnobs();
    this.hookPsfHover();
    el<HTMLButtonElement>("btn-pattern").addEventListener("click", () => void this.sendPattern());
    el<HTMLInputElement>("file-upload").addEventListener("change", (ev) => {
      const file = (ev.target as HTMLInputElement).files?.[0];
      if (file) void this.sendUpload(file);
    });
    el<HTMLButtonElement>("btn-camera").addEventListener("click", () => void this.captureCamera());
    el<HTMLButtonElement>("btn-snapshot").addEventListener("click", () => this.snapshot());
    el<HTMLInputElement>("toggle-disp").addEventListener("change", (ev) => {
      this.dispatch({
        kind: "overlay_toggled",
        overlay: "displacement",
        on: (ev.target as HTMLInputElement).checked,
      });
    });
    el<HTMLInputElement>("toggle-psf").addEventListener("change", (ev) => {
      this.dispatch({
        kind: "overlay_toggled",
        overlay: "psfGrid",
        on: (ev.target as HTMLInputElement).checked,
      });
    });

    try {
      const params = await this.api.getParams();
      this.dispatch({ kind: "params_ack", params });
    } catch {
      this.dispatch({ kind: "ws_error" });
    }
    this.connectSockets();
    void this.pollDisplacement();
    void this.pollPsfGrid();
  }
}

window.addEventListener("load", () => {
  void new App().start();
});
