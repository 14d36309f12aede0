// Built-in resolution test pattern so the UI works with zero uploads.

/**
 * Grayscale chart: frame border, center crosshair, and bar groups of
 * increasing spatial frequency in the four quadrants, plus a contrast
 * staircase along the bottom. Values are 0..255, row-major.
 */
export function testPattern(width: number, height: number): Uint8Array {
  const img = new Uint8Array(width * height).fill(230);
  const set = (x: number, y: number, v: number) => {
    if (x >= 0 && x < width && y >= 0 && y < height) img[y * width + x] = v;
  };

  const border = Math.max(2, Math.round(Math.min(width, height) * 0.02));
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (x < border || y < border || x >= width - border || y >= height - border) {
        set(x, y, 10);
      }
    }
  }

  const cx = Math.floor(width / 2);
  const cy = Math.floor(height / 2);
  const arm = Math.floor(Math.min(width, height) * 0.12);
  for (let d = -arm; d <= arm; d++) {
    set(cx + d, cy, 10);
    set(cx, cy + d, 10);
  }

  // Bar groups: period doubles between quadrants, vertical and horizontal.
  const groups = [
    { x0: 0.12, y0: 0.12, period: 2, vertical: true },
    { x0: 0.62, y0: 0.12, period: 4, vertical: false },
    { x0: 0.12, y0: 0.62, period: 8, vertical: false },
    { x0: 0.62, y0: 0.62, period: 16, vertical: true },
  ];
  const gw = Math.floor(width * 0.26);
  const gh = Math.floor(height * 0.26);
  for (const g of groups) {
    const gx = Math.floor(width * g.x0);
    const gy = Math.floor(height * g.y0);
    for (let y = 0; y < gh; y++) {
      for (let x = 0; x < gw; x++) {
        const phase = g.vertical ? x : y;
        const on = Math.floor(phase / g.period) % 2 === 0;
        set(gx + x, gy + y, on ? 10 : 245);
      }
    }
  }

  const steps = 8;
  const sh = Math.max(4, Math.floor(height * 0.05));
  const sy = height - border - sh - 2;
  for (let s = 0; s < steps; s++) {
    const v = Math.round((255 * s) / (steps - 1));
    const x0 = border + 2 + Math.floor(((width - 2 * border - 4) * s) / steps);
    const x1 = border + 2 + Math.floor(((width - 2 * border - 4) * (s + 1)) / steps);
    for (let y = sy; y < sy + sh; y++) {
      for (let x = x0; x < x1; x++) set(x, y, v);
    }
  }

  return img;
}

/** Encode 8-bit grayscale pixels as binary PGM (P5), upload-ready. */
export function encodePgm(pixels: Uint8Array, width: number, height: number): Uint8Array {
  if (pixels.length !== width * height) {
    throw new Error(`pixel count ${pixels.length} != ${width}x${height}`);
  }
  const header = new TextEncoder().encode(`P5\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + pixels.length);
  out.set(header, 0);
  out.set(pixels, header.length);
  return out;
}
