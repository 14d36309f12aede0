import { describe, expect, it } from "vitest";

import { ApiClient, FieldErrors } from "../src/api.js";
import { encodePgm, testPattern } from "../src/pattern.js";
import { MockServer } from "./mock.js";

describe("api client", () => {
  it("reads params and mirrors the ack shape", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const params = await api.getParams();
    expect(params.d_over_r0).toBe(2);
    expect(params.refitting).toBe(false);
  });

  it("puts partial updates and gets the merged target back", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const ack = await api.putParams({ d_over_r0: 4 });
    expect(ack.d_over_r0).toBe(4);
    expect(ack.image_width).toBe(256);
  });

  it("maps 400 bodies onto FieldErrors", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const err = await api.putParams({ bogus: 1 }).catch((e) => e);
    expect(err).toBeInstanceOf(FieldErrors);
    expect(err.errors.bogus).toBe("unknown field");
  });

  it("uploads the built-in pattern as pgm bytes", async () => {
    const server = new MockServer();
    const api = new ApiClient("http://mock", server.fetch);
    const pgm = encodePgm(testPattern(256, 256), 256, 256);
    const resp = await api.postSource(pgm, "image/x-portable-graymap");
    expect(resp.ok).toBe(true);
    expect(server.sourceUploads).toHaveLength(1);
    const header = new TextDecoder().decode(server.sourceUploads[0].slice(0, 2));
    expect(header).toBe("P5");
  });

  it("fetches the displacement field with the decimation step", async () => {
    const server = new MockServer();
    server.displacement = { width: 256, height: 256, step: 16, rows: [[8, 8, 0.3, -0.1]] };
    const api = new ApiClient("http://mock", server.fetch);
    const field = await api.getDisplacement(16);
    expect(field.step).toBe(16);
    expect(field.rows).toHaveLength(1);
  });

  it("derives websocket urls from the http base", () => {
    const api = new ApiClient("http://localhost:8000");
    expect(api.streamUrl()).toBe("ws://localhost:8000/api/stream");
    expect(api.eventsUrl()).toBe("ws://localhost:8000/api/events");
  });
});
