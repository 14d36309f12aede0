import { describe, expect, it } from "vitest";

import { FpsMeter, FrameGate, FrameMsg, RenderQueue, StreamClient, parseFrame } from "../src/stream.js";
import { FakeSocket, frameMessage } from "./mock.js";

const tick = () => new Promise<void>((r) => setTimeout(r, 0));

describe("frame message parsing", () => {
  it("splits the little-endian header from the payload", () => {
    const png = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 1, 2, 3]);
    const msg = parseFrame(frameMessage(1234, 512, 384, png));
    expect(msg.index).toBe(1234);
    expect(msg.width).toBe(512);
    expect(msg.height).toBe(384);
    expect(Array.from(msg.png)).toEqual(Array.from(png));
  });

  it("rejects runt messages", () => {
    expect(() => parseFrame(new ArrayBuffer(7))).toThrow(/too short/);
  });
});

describe("frame ordering", () => {
  it("accepts strictly increasing indices", () => {
    const gate = new FrameGate();
    expect([1, 2, 3].map((i) => gate.accept(i))).toEqual([true, true, true]);
    expect(gate.dropped).toBe(0);
  });

  it("drops a frame that arrives late", () => {
    const gate = new FrameGate();
    expect(gate.accept(1)).toBe(true);
    expect(gate.accept(3)).toBe(true);
    expect(gate.accept(2)).toBe(false);
    expect(gate.dropped).toBe(1);
  });

  it("drops duplicates", () => {
    const gate = new FrameGate();
    gate.accept(5);
    expect(gate.accept(5)).toBe(false);
  });
});

describe("fps meter", () => {
  it("reads 30 +- 2 on a synthetic 30 fps feed", () => {
    const meter = new FpsMeter(2000);
    for (let i = 0; i <= 150; i++) {
      meter.push((i * 1000) / 30);
    }
    expect(meter.fps()).toBeGreaterThan(28);
    expect(meter.fps()).toBeLessThan(32);
  });

  it("only looks at the sliding 2 s window", () => {
    const meter = new FpsMeter(2000);
    // 10 fps for 3 s, then 30 fps for 3 s: the early slow stretch must not drag the reading
    let t = 0;
    for (let i = 0; i < 30; i++, t += 100) meter.push(t);
    for (let i = 0; i < 90; i++, t += 1000 / 30) meter.push(t);
    expect(meter.fps()).toBeGreaterThan(28);
    expect(meter.fps()).toBeLessThan(32);
  });

  it("reports 0 before two frames arrived", () => {
    const meter = new FpsMeter();
    expect(meter.fps()).toBe(0);
    meter.push(10);
    expect(meter.fps()).toBe(0);
  });
});

describe("render queue", () => {
  it("keeps order below the depth limit", () => {
    const q = new RenderQueue<number>(2);
    q.push(1);
    q.push(2);
    expect(q.shift()).toBe(1);
    expect(q.shift()).toBe(2);
  });

  it("drops the oldest item when full", () => {
    const q = new RenderQueue<number>(2);
    q.push(1);
    q.push(2);
    q.push(3);
    expect(q.length).toBe(2);
    expect(q.shift()).toBe(2);
    expect(q.shift()).toBe(3);
  });
});

function makeClient(opts: {
  draws: number[];
  stats?: { fps: number; frameIndex: number; dropped: number; decodeFailures: number }[];
  now?: () => number;
  decode?: (frame: FrameMsg) => Promise<unknown>;
}): StreamClient {
  return new StreamClient({
    decode: opts.decode ?? (async (frame) => frame.index),
    draw: (_img, frame) => opts.draws.push(frame.index),
    onStats: (s) => opts.stats?.push(s),
    now: opts.now,
  });
}

describe("stream client", () => {
  it("draws in-order frames 1..10 exactly once each", async () => {
    const draws: number[] = [];
    const client = makeClient({ draws });
    const sock = new FakeSocket();
    client.attach(sock);
    for (let i = 1; i <= 10; i++) {
      sock.message(frameMessage(i));
      await tick(); // consumer keeps up with the feed
    }
    expect(draws).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
  });

  it("drops the out-of-order frame in a 1,3,2 arrival", async () => {
    const draws: number[] = [];
    const stats: { dropped: number }[] = [];
    const client = makeClient({ draws, stats: stats as never });
    const sock = new FakeSocket();
    client.attach(sock);
    for (const i of [1, 3, 2]) {
      sock.message(frameMessage(i));
      await tick();
    }
    expect(draws).toEqual([1, 3]);
    expect(stats[stats.length - 1].dropped).toBe(1);
  });

  it("reads 30 +- 2 fps from a synthetic 30 fps feed", async () => {
    let clock = 0;
    const draws: number[] = [];
    const stats: { fps: number }[] = [];
    const client = makeClient({ draws, stats: stats as never, now: () => clock });
    const sock = new FakeSocket();
    client.attach(sock);
    for (let i = 1; i <= 120; i++) {
      clock = (i * 1000) / 30;
      sock.message(frameMessage(i));
      await tick();
    }
    const fps = stats[stats.length - 1].fps;
    expect(fps).toBeGreaterThan(28);
    expect(fps).toBeLessThan(32);
    expect(draws).toHaveLength(120);
  });

  it("skips a frame that fails to decode and counts it", async () => {
    const draws: number[] = [];
    const stats: { decodeFailures: number }[] = [];
    const bad = new Uint8Array([0xff]); // marker the fake decoder refuses
    const client = makeClient({
      draws,
      stats: stats as never,
      decode: async (frame) => {
        if (frame.png[0] === 0xff) throw new Error("corrupt");
        return frame.index;
      },
    });
    const sock = new FakeSocket();
    client.attach(sock);
    sock.message(frameMessage(1));
    await tick();
    sock.message(frameMessage(2, 4, 4, bad));
    await tick();
    sock.message(frameMessage(3));
    await tick();
    expect(draws).toEqual([1, 3]);
    expect(client.decodeFailures).toBe(1);
    expect(stats[stats.length - 1].decodeFailures).toBe(1);
  });

  it("counts an unparseable message as a decode failure", async () => {
    const draws: number[] = [];
    const client = makeClient({ draws });
    client.onMessage(new ArrayBuffer(3));
    await tick();
    expect(draws).toHaveLength(0);
    expect(client.decodeFailures).toBe(1);
  });

  it("backpressure keeps only the freshest two frames while a draw is stuck", async () => {
    const draws: number[] = [];
    let release: (() => void) | null = null;
    const client = makeClient({
      draws,
      decode: (frame) =>
        new Promise((resolve) => {
          if (frame.index === 1) {
            release = () => resolve(frame.index);
          } else {
            resolve(frame.index);
          }
        }),
    });
    const sock = new FakeSocket();
    client.attach(sock);
    sock.message(frameMessage(1)); // enters decode and blocks
    await tick();
    sock.message(frameMessage(2));
    sock.message(frameMessage(3));
    sock.message(frameMessage(4)); // queue depth 2: frame 2 falls out
    expect(client.queue.length).toBe(2);
    release!();
    await tick();
    expect(draws).toEqual([1, 3, 4]);
  });
});
