// Binary frame stream handling: parsing, ordering, backpressure, fps.

export interface FrameMsg {
  index: number;
  width: number;
  height: number;
  png: Uint8Array;
}

const HEADER_BYTES = 12;

/** Parse one WS message: u32 LE frame index, width, height, then PNG bytes. */
export function parseFrame(buf: ArrayBuffer): FrameMsg {
  if (buf.byteLength < HEADER_BYTES) {
    throw new Error(`frame message too short: ${buf.byteLength} bytes`);
  }
  const view = new DataView(buf);
  return {
    index: view.getUint32(0, true),
    width: view.getUint32(4, true),
    height: view.getUint32(8, true),
    png: new Uint8Array(buf, HEADER_BYTES),
  };
}

/** Accepts only strictly increasing frame indices; late frames are dropped. */
export class FrameGate {
  lastIndex = -1;
  dropped = 0;

  accept(index: number): boolean {
    if (index <= this.lastIndex) {
      this.dropped += 1;
      return false;
    }
    this.lastIndex = index;
    return true;
  }
}

/** Frame rate over a sliding window (default 2 s) of arrival timestamps. */
export class FpsMeter {
  private times: number[] = [];

  constructor(private windowMs = 2000) {}

  push(t: number): void {
    this.times.push(t);
    const cutoff = t - this.windowMs;
    while (this.times.length > 0 && this.times[0] < cutoff) {
      this.times.shift();
    }
  }

  fps(): number {
    if (this.times.length < 2) return 0;
    const span = this.times[this.times.length - 1] - this.times[0];
    return span > 0 ? ((this.times.length - 1) * 1000) / span : 0;
  }
}

/**
 * Bounded FIFO between the WS handler and the draw loop. When a frame
 * arrives while the queue is full the oldest queued frame is discarded,
 * so a slow consumer sees the freshest frames and order is preserved.
 */
export class RenderQueue<T> {
  private items: T[] = [];

  constructor(readonly depth = 2) {}

  push(item: T): void {
    if (this.items.length >= this.depth) {
      this.items.shift();
    }
    this.items.push(item);
  }

  shift(): T | undefined {
    return this.items.shift();
  }

  get length(): number {
    return this.items.length;
  }
}

/** Minimal WebSocket surface so tests can drive the client with a fake. */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface StreamHooks {
  /** Decode PNG bytes into something drawable (ImageBitmap in the browser). */
  decode(frame: FrameMsg): Promise<unknown>;
  draw(image: unknown, frame: FrameMsg): void;
  onOpen?(): void;
  onError?(): void;
  onClose?(): void;
  /** Called after every accepted, dropped or failed frame. */
  onStats?(s: { fps: number; frameIndex: number; dropped: number; decodeFailures: number }): void;
  now?(): number;
}

/**
 * Consumes /api/stream: parses messages, drops out-of-order frames, pushes
 * the rest through a depth-2 render queue and an async decode-draw loop.
 * Decode failures skip the frame and bump a counter instead of stalling.
 */
export class StreamClient {
  readonly gate = new FrameGate();
  readonly queue = new RenderQueue<FrameMsg>(2);
  readonly meter = new FpsMeter();
  decodeFailures = 0;
  private drawing = false;
  private now: () => number;

  constructor(private hooks: StreamHooks) {
    this.now = hooks.now ?? (() => performance.now());
  }

  attach(sock: SocketLike): void {
    sock.binaryType = "arraybuffer";
    sock.onopen = () => this.hooks.onOpen?.();
    sock.onerror = () => this.hooks.onError?.();
    sock.onclose = () => this.hooks.onClose?.();
    sock.onmessage = (ev) => this.onMessage(ev.data);
  }

  onMessage(data: ArrayBuffer): void {
    let frame: FrameMsg;
    try {
      frame = parseFrame(data);
    } catch {
      this.decodeFailures += 1;
      this.emitStats();
      return;
    }
    if (!this.gate.accept(frame.index)) {
      this.emitStats();
      return;
    }
    this.meter.push(this.now());
    this.queue.push(frame);
    this.emitStats();
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.drawing) return;
    this.drawing = true;
    try {
      for (let frame = this.queue.shift(); frame; frame = this.queue.shift()) {
        try {
          const image = await this.hooks.decode(frame);
          this.hooks.draw(image, frame);
        } catch {
          this.decodeFailures += 1;
          this.emitStats();
        }
      }
    } finally {
      this.drawing = false;
    }
  }

  private emitStats(): void {
    this.hooks.onStats?.({
      fps: this.meter.fps(),
      frameIndex: this.gate.lastIndex,
      dropped: this.gate.dropped,
      decodeFailures: this.decodeFailures,
    });
  }
}
