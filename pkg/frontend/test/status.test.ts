import { describe, expect, it } from "vitest";

import { reduce } from "../src/status.js";
import { ParamsAck, initialState } from "../src/types.js";
import { DEFAULT_PARAMS } from "./mock.js";

const ack = (over: Partial<ParamsAck> = {}): ParamsAck => ({
  ...DEFAULT_PARAMS,
  refitting: false,
  ...over,
});

const statusEvent = (refitting: boolean) => ({
  kind: "server_status" as const,
  event: { status: refitting ? "refitting" : "live", refitting, fps: 30, frame_counter: 1, config_hash: "x" },
});

describe("session state machine", () => {
  it("starts connecting and goes live on socket open", () => {
    let s = initialState("http://localhost");
    expect(s.status).toBe("connecting");
    s = reduce(s, { kind: "ws_open" });
    expect(s.status).toBe("live");
  });

  it("stays within the four advertised statuses across a full session", () => {
    const allowed = new Set(["connecting", "live", "refitting", "error"]);
    let s = initialState("");
    const run = [
      { kind: "ws_connecting" } as const,
      { kind: "ws_open" } as const,
      { kind: "params_ack", params: ack({ refitting: true }) } as const,
      statusEvent(true),
      statusEvent(false),
      { kind: "ws_error" } as const,
    ];
    for (const action of run) {
      s = reduce(s, action);
      expect(allowed.has(s.status)).toBe(true);
    }
  });

  it("reflects a refitting ack and clears when the server reports live", () => {
    let s = reduce(initialState(""), { kind: "ws_open" });
    s = reduce(s, { kind: "params_ack", params: ack({ d_over_r0: 6, refitting: true }) });
    expect(s.status).toBe("refitting");
    s = reduce(s, statusEvent(false));
    expect(s.status).toBe("live");
  });

  it("socket failure forces error regardless of later status pushes", () => {
    let s = reduce(initialState(""), { kind: "ws_open" });
    s = reduce(s, { kind: "ws_error" });
    expect(s.status).toBe("error");
    s = reduce(s, statusEvent(false));
    expect(s.status).toBe("error");
  });

  it("params mirror always equals the last server ack, never the dragged value", () => {
    let s = reduce(initialState(""), { kind: "ws_open" });
    // server clamps nothing here, it just acks what it accepted;
    // the UI must show that ack, not whatever the slider reads
    s = reduce(s, { kind: "params_ack", params: ack({ d_over_r0: 2.5 }) });
    expect(s.params?.d_over_r0).toBe(2.5);
    s = reduce(s, { kind: "params_ack", params: ack({ d_over_r0: 4.0 }) });
    expect(s.params?.d_over_r0).toBe(4.0);
    expect(s.fieldErrors).toEqual({});
  });

  it("is a pure function of its inputs", () => {
    const s0 = reduce(initialState(""), { kind: "ws_open" });
    const a = { kind: "params_ack" as const, params: ack({ d_over_r0: 3 }) };
    expect(reduce(s0, a)).toEqual(reduce(s0, a));
    expect(s0.params).toBeNull(); // input state not mutated
  });

  it("a rejected update leaves the mirror untouched and surfaces field errors", () => {
    let s = reduce(initialState(""), { kind: "params_ack", params: ack() });
    s = reduce(s, { kind: "params_rejected", errors: { d_over_r0: "must be finite" } });
    expect(s.params?.d_over_r0).toBe(DEFAULT_PARAMS.d_over_r0);
    expect(s.fieldErrors.d_over_r0).toBe("must be finite");
    s = reduce(s, { kind: "params_ack", params: ack({ d_over_r0: 1 }) });
    expect(s.fieldErrors).toEqual({});
  });

  it("tracks stream counters for the status panel", () => {
    let s = initialState("");
    s = reduce(s, { kind: "stream_stats", fps: 29.7, frameIndex: 42, dropped: 2, decodeFailures: 1 });
    expect(s.fps).toBeCloseTo(29.7);
    expect(s.frameIndex).toBe(42);
    expect(s.droppedFrames).toBe(2);
    expect(s.decodeFailures).toBe(1);
  });
});
