// Shapes of the payloads the service exchanges over HTTP and WebSocket.

export interface SimParams {
  aperture_diameter_m: number;
  wavelength_m: number;
  path_length_m: number;
  focal_length_m: number;
  d_over_r0: number;
  cn2?: number;
  num_modes: number;
  image_width: number;
  image_height: number;
  scene_width_m: number;
  psf_kernel_px: number;
  phase_grid_px: number;
}

/** PUT /api/params acknowledgment: the target config plus the refit flag. */
export interface ParamsAck extends SimParams {
  refitting: boolean;
}

/** JSON message pushed on /api/events. */
export interface StatusEvent {
  status: string;
  refitting: boolean;
  fps: number;
  frame_counter: number;
  config_hash: string;
}

/** GET /api/displacement payload; rows are [x, y, dx, dy] in pixels. */
export interface DisplacementField {
  width: number;
  height: number;
  step: number;
  rows: [number, number, number, number][];
}

export interface Stats {
  frame_counter: number;
  fps: number;
  stage_ms: Record<string, number>;
  config_hash: string;
}

export type StreamStatus = "connecting" | "live" | "refitting" | "error";

export type SourceKind = "upload" | "pattern" | "camera";

/**
 * Everything the UI shows, derived only from the last server acknowledgment
 * plus connection state. Knobs never display a value the server has not
 * acked, so a refit in flight cannot make the controls drift.
 */
export interface UiSessionState {
  serverUrl: string;
  params: ParamsAck | null;
  status: StreamStatus;
  fps: number;
  frameIndex: number;
  decodeFailures: number;
  droppedFrames: number;
  source: SourceKind;
  overlays: { displacement: boolean; psfGrid: boolean };
  fieldErrors: Record<string, string>;
}

export function initialState(serverUrl: string): UiSessionState {
  return {
    serverUrl,
    params: null,
    status: "connecting",
    fps: 0,
    frameIndex: -1,
    decodeFailures: 0,
    droppedFrames: 0,
    source: "pattern",
    overlays: { displacement: false, psfGrid: true },
    fieldErrors: {},
  };
}
