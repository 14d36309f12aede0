import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { KNOBS, KnobSender, knobInRange, knobSpec } from "../src/knobs.js";
import { MockServer } from "./mock.js";

describe("knob bounds", () => {
  it("covers turbulence strength, path length and aperture with the advertised ranges", () => {
    expect(knobSpec("d_over_r0")).toMatchObject({ min: 0, max: 8 });
    expect(knobSpec("path_length_m")).toMatchObject({ min: 100, max: 10000 });
    expect(knobSpec("aperture_diameter_m")).toMatchObject({ min: 0.01, max: 0.5 });
  });

  it("accepts in-range values and rejects out-of-range ones", () => {
    const d = knobSpec("d_over_r0")!;
    expect(knobInRange(d, 0)).toBe(true);
    expect(knobInRange(d, 8)).toBe(true);
    expect(knobInRange(d, 8.01)).toBe(false);
    expect(knobInRange(d, -0.1)).toBe(false);
    expect(knobInRange(d, NaN)).toBe(false);
  });
});

describe("knob update coalescing", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("sends nothing for out-of-range values", () => {
    const sends: Record<string, number>[] = [];
    const sender = new KnobSender((u) => sends.push(u));
    expect(sender.update("d_over_r0", 9)).toBe(false);
    expect(sender.update("path_length_m", 50)).toBe(false);
    expect(sender.update("aperture_diameter_m", 0.6)).toBe(false);
    vi.advanceTimersByTime(1000);
    expect(sends).toHaveLength(0);
  });

  it("coalesces a 20 Hz drag to at most 5 requests per second, last value winning", () => {
    const sends: { t: number; batch: Record<string, number> }[] = [];
    const sender = new KnobSender((u) => sends.push({ t: Date.now(), batch: u }));

    // 2 s drag at 20 updates/s across the d_over_r0 range
    const values: number[] = [];
    for (let i = 0; i < 40; i++) {
      values.push((8 * i) / 39);
      sender.update("d_over_r0", values[i]);
      vi.advanceTimersByTime(50);
    }
    vi.advanceTimersByTime(300); // trailing flush

    expect(sends.length).toBeGreaterThan(0);
    expect(sends.length).toBeLessThan(40); // actually coalesced
    const span = (sends[sends.length - 1].t - sends[0].t) / 1000;
    if (span > 0) {
      expect((sends.length - 1) / span).toBeLessThanOrEqual(5.0);
    }
    // every 1-second slice holds at most 5 sends
    for (const s of sends) {
      const inWindow = sends.filter((x) => x.t > s.t && x.t <= s.t + 1000);
      expect(inWindow.length).toBeLessThanOrEqual(5);
    }
    const last = sends[sends.length - 1].batch;
    expect(last.d_over_r0).toBe(values[values.length - 1]);
  });

  it("merges drags on different knobs into one batch", () => {
    const sends: Record<string, number>[] = [];
    const sender = new KnobSender((u) => sends.push(u));
    sender.update("d_over_r0", 1); // idle line: goes out immediately
    sender.update("d_over_r0", 2);
    sender.update("path_length_m", 500);
    vi.advanceTimersByTime(250);
    expect(sends).toHaveLength(2);
    expect(sends[1]).toEqual({ d_over_r0: 2, path_length_m: 500 });
  });

  it("flush() pushes a pending value out early", () => {
    const sends: Record<string, number>[] = [];
    const sender = new KnobSender((u) => sends.push(u));
    sender.update("d_over_r0", 1);
    sender.update("d_over_r0", 3);
    sender.flush();
    expect(sends).toHaveLength(2);
    expect(sends[1]).toEqual({ d_over_r0: 3 });
  });
});

describe("knob updates against the mock server", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("a drag reaches the server rate-limited and the final ack matches the last value", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const sender = new KnobSender((u) => void api.putParams(u));

    for (let i = 0; i <= 30; i++) {
      sender.update("d_over_r0", i / 10);
      vi.advanceTimersByTime(50);
    }
    vi.advanceTimersByTime(300);
    await vi.runAllTimersAsync();

    expect(server.putBodies.length).toBeLessThan(31);
    for (let i = 0; i < server.putTimes.length; i++) {
      const t = server.putTimes[i];
      const inWindow = server.putTimes.filter((x) => x > t && x <= t + 1000);
      expect(inWindow.length).toBeLessThanOrEqual(5);
    }
    expect(server.params.d_over_r0).toBe(3.0);
  });

  it("out-of-range values never produce a request", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const sender = new KnobSender((u) => void api.putParams(u));
    sender.update("d_over_r0", 12);
    sender.update("aperture_diameter_m", 0.001);
    await vi.runAllTimersAsync();
    expect(server.putBodies).toHaveLength(0);
  });

  it("unknown fields come back as per-field errors", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    await expect(api.putParams({ warp_factor: 9 })).rejects.toMatchObject({
      errors: { warp_factor: "unknown field" },
    });
  });
});

describe("knob table", () => {
  it("lists every slider exactly once", () => {
    const paths = KNOBS.map((k) => k.path);
    expect(new Set(paths).size).toBe(paths.length);
  });
});
