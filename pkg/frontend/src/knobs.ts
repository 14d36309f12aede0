// Slider definitions and the rate limiter between drags and PUT /api/params.

export interface KnobSpec {
  path: string;
  label: string;
  min: number;
  max: number;
  step: number;
  unit: string;
}

export const KNOBS: KnobSpec[] = [
  { path: "d_over_r0", label: "Turbulence D/r0", min: 0, max: 8, step: 0.1, unit: "" },
  { path: "path_length_m", label: "Path length", min: 100, max: 10000, step: 100, unit: "m" },
  { path: "aperture_diameter_m", label: "Aperture", min: 0.01, max: 0.5, step: 0.005, unit: "m" },
];

export function knobSpec(path: string): KnobSpec | undefined {
  return KNOBS.find((k) => k.path === path);
}

/** True when the value sits inside the slider bounds (inclusive). */
export function knobInRange(spec: KnobSpec, value: number): boolean {
  return Number.isFinite(value) && value >= spec.min && value <= spec.max;
}

export type SendFn = (updates: Record<string, number>) => void;

/**
 * Coalesces knob movement into a bounded request stream. Each update lands
 * immediately when the line is idle; during a drag, updates within the
 * minimum interval are merged into one pending batch and flushed by a
 * trailing timer, so the newest value always wins and the request rate
 * never exceeds 1/minIntervalMs.
 *
 * Out-of-range values are rejected here, before any request is formed.
 */
export class KnobSender {
  private pending: Record<string, number> | null = null;
  private lastSent = -Infinity;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private send: SendFn,
    private minIntervalMs = 200,
    private now: () => number = () => Date.now(),
  ) {}

  /** Returns false when the value is out of range (nothing is sent). */
  update(path: string, value: number): boolean {
    const spec = knobSpec(path);
    if (spec && !knobInRange(spec, value)) return false;
    if (this.pending) {
      this.pending[path] = value;
      return true;
    }
    const elapsed = this.now() - this.lastSent;
    if (elapsed >= this.minIntervalMs) {
      this.flushNow({ [path]: value });
    } else {
      this.pending = { [path]: value };
      this.timer = setTimeout(() => this.onTimer(), this.minIntervalMs - elapsed);
    }
    return true;
  }

  /** Force out whatever is pending (e.g. on slider release). */
  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.onTimer();
    }
  }

  private onTimer(): void {
    this.timer = null;
    if (this.pending) {
      const batch = this.pending;
      this.pending = null;
      this.flushNow(batch);
    }
  }

  private flushNow(batch: Record<string, number>): void {
    this.lastSent = this.now();
    this.send(batch);
  }
}
