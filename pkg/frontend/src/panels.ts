// Overlay panel logic: displacement arrows, PSF grid tiling, staleness.

import { DisplacementField } from "./types.js";

export interface Arrow {
  x: number;
  y: number;
  dx: number;
  dy: number;
}

/**
 * Rows with measurable displacement become arrows; zero (and numerically
 * zero) vectors produce nothing, so an undistorted field draws no overlay.
 */
export function arrowsFrom(field: DisplacementField, minLength = 1e-6): Arrow[] {
  const arrows: Arrow[] = [];
  for (const [x, y, dx, dy] of field.rows) {
    if (Math.hypot(dx, dy) < minLength) continue;
    arrows.push({ x, y, dx, dy });
  }
  return arrows;
}

export interface Tile {
  index: number;
  row: number;
  col: number;
  /** Top-left corner inside the mosaic image, pixels. */
  sx: number;
  sy: number;
  size: number;
}

/** Split an n-by-n mosaic into tiles; index runs row-major from 0. */
export function gridTiles(imageWidth: number, imageHeight: number, n: number): Tile[] {
  const size = Math.floor(imageWidth / n);
  if (size < 1 || Math.floor(imageHeight / n) !== size) {
    throw new Error(`mosaic ${imageWidth}x${imageHeight} does not split into ${n}x${n} tiles`);
  }
  const tiles: Tile[] = [];
  for (let row = 0; row < n; row++) {
    for (let col = 0; col < n; col++) {
      tiles.push({ index: row * n + col, row, col, sx: col * size, sy: row * size, size });
    }
  }
  return tiles;
}

/** Tile under an image-space point, or null outside the mosaic. */
export function tileAt(tiles: Tile[], n: number, x: number, y: number): Tile | null {
  if (tiles.length === 0) return null;
  const size = tiles[0].size;
  const col = Math.floor(x / size);
  const row = Math.floor(y / size);
  if (col < 0 || col >= n || row < 0 || row >= n) return null;
  return tiles[row * n + col];
}

/** Tracks the age of a panel's data; panels grey out past maxAgeMs. */
export class Staleness {
  private updatedAt = -Infinity;

  constructor(private maxAgeMs = 2000) {}

  markUpdated(now: number): void {
    this.updatedAt = now;
  }

  isStale(now: number): boolean {
    return now - this.updatedAt > this.maxAgeMs;
  }
}

/**
 * PSF mosaic panel: shows the grid image, and a zoom box that follows the
 * pointer and magnifies the hovered tile, labeled with its index. Input
 * coordinates are in mosaic image pixels so the logic stays layout-free.
 */
export class PsfGridPanel {
  readonly img: HTMLImageElement;
  readonly zoom: HTMLDivElement;
  readonly label: HTMLSpanElement;
  private tiles: Tile[] = [];
  private n = 0;

  constructor(readonly root: HTMLElement, private zoomScale = 4) {
    this.img = document.createElement("img");
    this.img.className = "psf-mosaic";
    this.img.alt = "PSF grid";
    this.zoom = document.createElement("div");
    this.zoom.className = "psf-zoom";
    this.zoom.hidden = true;
    this.label = document.createElement("span");
    this.label.className = "psf-zoom-label";
    this.zoom.appendChild(this.label);
    root.appendChild(this.img);
    root.appendChild(this.zoom);
  }

  setImage(url: string, imageWidth: number, imageHeight: number, n: number): void {
    this.img.src = url;
    this.n = n;
    this.tiles = gridTiles(imageWidth, imageHeight, n);
  }

  get tileCount(): number {
    return this.tiles.length;
  }

  /** Pointer moved to (x, y) in mosaic pixels; returns the hovered tile. */
  hover(x: number, y: number): Tile | null {
    const tile = tileAt(this.tiles, this.n, x, y);
    if (!tile) {
      this.zoom.hidden = true;
      return null;
    }
    this.zoom.hidden = false;
    this.label.textContent = `tile ${tile.index}`;
    const z = tile.size * this.zoomScale;
    this.zoom.style.width = `${z}px`;
    this.zoom.style.height = `${z}px`;
    this.zoom.style.backgroundImage = `url("${this.img.src}")`;
    this.zoom.style.backgroundSize = `${this.n * z}px ${this.n * z}px`;
    this.zoom.style.backgroundPosition = `-${tile.sx * this.zoomScale}px -${tile.sy * this.zoomScale}px`;
    return tile;
  }

  leave(): void {
    this.zoom.hidden = true;
  }

  setStale(stale: boolean): void {
    this.root.classList.toggle("stale", stale);
  }
}

/** Draw arrows onto a canvas 2D context, scaled for visibility. */
export function drawArrows(
  ctx: CanvasRenderingContext2D,
  arrows: Arrow[],
  scale = 4,
): void {
  ctx.strokeStyle = "#ffd166";
  ctx.fillStyle = "#ffd166";
  ctx.lineWidth = 1;
  for (const a of arrows) {
    const x2 = a.x + a.dx * scale;
    const y2 = a.y + a.dy * scale;
    ctx.beginPath();
    ctx.moveTo(a.x, a.y);
    ctx.lineTo(x2, y2);
    ctx.stroke();
    const ang = Math.atan2(y2 - a.y, x2 - a.x);
    ctx.beginPath();
    ctx.moveTo(x2, y2);
    ctx.lineTo(x2 - 3 * Math.cos(ang - 0.5), y2 - 3 * Math.sin(ang - 0.5));
    ctx.lineTo(x2 - 3 * Math.cos(ang + 0.5), y2 - 3 * Math.sin(ang + 0.5));
    ctx.closePath();
    ctx.fill();
  }
}
