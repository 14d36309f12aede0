import { describe, expect, it } from "vitest";

import { encodePgm, testPattern } from "../src/pattern.js";

describe("built-in test pattern", () => {
  it("fills the requested dimensions", () => {
    expect(testPattern(256, 256)).toHaveLength(256 * 256);
    expect(testPattern(320, 200)).toHaveLength(320 * 200);
  });

  it("spans dark to bright with a dark frame border", () => {
    const img = testPattern(256, 256);
    expect(Math.min(...img)).toBeLessThanOrEqual(10);
    expect(Math.max(...img)).toBeGreaterThanOrEqual(245);
    expect(img[0]).toBeLessThanOrEqual(10);
    expect(img[256 * 256 - 1]).toBeLessThanOrEqual(10);
  });

  it("contains bar structure, not a flat field", () => {
    const img = testPattern(256, 256);
    const row = Math.floor(256 * 0.2);
    let transitions = 0;
    for (let x = 1; x < 256; x++) {
      const a = img[row * 256 + x - 1] > 128;
      const b = img[row * 256 + x] > 128;
      if (a !== b) transitions++;
    }
    expect(transitions).toBeGreaterThan(10);
  });
});

describe("pgm encoding", () => {
  it("emits a P5 header followed by the raw pixels", () => {
    const img = testPattern(64, 48);
    const pgm = encodePgm(img, 64, 48);
    const header = new TextDecoder().decode(pgm.slice(0, 13));
    expect(header).toBe("P5\n64 48\n255\n");
    expect(pgm).toHaveLength(13 + 64 * 48);
    expect(Array.from(pgm.slice(13, 23))).toEqual(Array.from(img.slice(0, 10)));
  });

  it("rejects a size mismatch", () => {
    expect(() => encodePgm(new Uint8Array(10), 4, 4)).toThrow(/pixel count/);
  });
});
