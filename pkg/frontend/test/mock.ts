// In-memory stand-in for the service: same routes, same payload shapes.
// Lets every rendering contract run without the real backend.

import { DisplacementField, ParamsAck, SimParams } from "../src/types.js";
import { SocketLike } from "../src/stream.js";

export const DEFAULT_PARAMS: SimParams = {
  aperture_diameter_m: 0.1,
  wavelength_m: 525e-9,
  path_length_m: 1000,
  focal_length_m: 0.5,
  d_over_r0: 2,
  num_modes: 36,
  image_width: 256,
  image_height: 256,
  scene_width_m: 1.0,
  psf_kernel_px: 33,
  phase_grid_px: 64,
};

const KNOWN_KEYS = new Set(Object.keys(DEFAULT_PARAMS).concat(["cn2"]));

export class MockServer {
  params: SimParams = { ...DEFAULT_PARAMS };
  refitting = false;
  putBodies: Record<string, number>[] = [];
  putTimes: number[] = [];
  sourceUploads: Uint8Array[] = [];
  displacement: DisplacementField = { width: 256, height: 256, step: 16, rows: [] };

  constructor(private now: () => number = () => Date.now()) {}

  /** Drop-in for the ApiClient's fetch function. */
  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = url.split("?")[0];
    if (path.endsWith("/api/params") && (!init || !init.method || init.method === "GET")) {
      return jsonResponse(this.ack());
    }
    if (path.endsWith("/api/params") && init?.method === "PUT") {
      const body = JSON.parse(String(init.body)) as Record<string, number>;
      const unknown = Object.keys(body).filter((k) => !KNOWN_KEYS.has(k));
      if (unknown.length > 0) {
        return jsonResponse(
          { errors: unknown.map((f) => ({ field: f, message: "unknown field" })) },
          400,
        );
      }
      this.putBodies.push(body);
      this.putTimes.push(this.now());
      this.params = { ...this.params, ...body };
      return jsonResponse(this.ack());
    }
    if (path.endsWith("/api/source") && init?.method === "POST") {
      this.sourceUploads.push(new Uint8Array(init.body as Uint8Array));
      return jsonResponse({ ok: true, width: this.params.image_width, height: this.params.image_height });
    }
    if (path.endsWith("/api/displacement")) {
      return jsonResponse(this.displacement);
    }
    if (path.endsWith("/api/stats")) {
      return jsonResponse({ frame_counter: 0, fps: 0, stage_ms: {}, config_hash: "mock" });
    }
    return jsonResponse({ errors: [{ message: `no route ${path}` }] }, 404);
  };

  ack(): ParamsAck {
    return { ...this.params, refitting: this.refitting };
  }
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Build one binary stream message: u32 LE index, width, height + payload. */
export function frameMessage(
  index: number,
  width = 4,
  height = 4,
  payload?: Uint8Array,
): ArrayBuffer {
  const png = payload ?? new Uint8Array([0x89, 0x50, 0x4e, 0x47]);
  const buf = new ArrayBuffer(12 + png.length);
  const view = new DataView(buf);
  view.setUint32(0, index, true);
  view.setUint32(4, width, true);
  view.setUint32(8, height, true);
  new Uint8Array(buf, 12).set(png);
  return buf;
}

/** Scriptable socket: tests call open/message/error to drive the client. */
export class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  closed = false;

  open(): void {
    this.onopen?.();
  }

  message(data: ArrayBuffer): void {
    this.onmessage?.({ data });
  }

  error(): void {
    this.onerror?.();
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}
