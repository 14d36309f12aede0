// Session state reducer: every UI-visible fact is a pure function of the
// last server acknowledgment plus connection events, applied here.

import { ParamsAck, StatusEvent, UiSessionState } from "./types.js";

export type SessionAction =
  | { kind: "ws_connecting" }
  | { kind: "ws_open" }
  | { kind: "ws_error" }
  | { kind: "ws_closed" }
  | { kind: "params_ack"; params: ParamsAck }
  | { kind: "params_rejected"; errors: Record<string, string> }
  | { kind: "server_status"; event: StatusEvent }
  | { kind: "stream_stats"; fps: number; frameIndex: number; dropped: number; decodeFailures: number }
  | { kind: "source_selected"; source: UiSessionState["source"] }
  | { kind: "overlay_toggled"; overlay: keyof UiSessionState["overlays"]; on: boolean };

export function reduce(state: UiSessionState, action: SessionAction): UiSessionState {
  switch (action.kind) {
    case "ws_connecting":
      return { ...state, status: "connecting" };
    case "ws_open":
      return { ...state, status: state.params?.refitting ? "refitting" : "live" };
    case "ws_error":
    case "ws_closed":
      return { ...state, status: "error" };
    case "params_ack":
      return {
        ...state,
        params: action.params,
        fieldErrors: {},
        status: state.status === "error" || state.status === "connecting"
          ? state.status
          : action.params.refitting
            ? "refitting"
            : "live",
      };
    case "params_rejected":
      return { ...state, fieldErrors: action.errors };
    case "server_status": {
      if (state.status === "error" || state.status === "connecting") return state;
      return { ...state, status: action.event.refitting ? "refitting" : "live" };
    }
    case "stream_stats":
      return {
        ...state,
        fps: action.fps,
        frameIndex: action.frameIndex,
        droppedFrames: action.dropped,
        decodeFailures: action.decodeFailures,
      };
    case "source_selected":
      return { ...state, source: action.source };
    case "overlay_toggled":
      return { ...state, overlays: { ...state.overlays, [action.overlay]: action.on } };
  }
}
