// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { PsfGridPanel, Staleness, arrowsFrom, gridTiles, tileAt } from "../src/panels.js";
import { DisplacementField } from "../src/types.js";

function field(rows: [number, number, number, number][]): DisplacementField {
  return { width: 256, height: 256, step: 16, rows };
}

describe("displacement arrows", () => {
  it("renders no arrows for a zero field", () => {
    const rows: [number, number, number, number][] = [];
    for (let y = 8; y < 256; y += 16) {
      for (let x = 8; x < 256; x += 16) {
        rows.push([x, y, 0, 0]);
      }
    }
    expect(arrowsFrom(field(rows))).toHaveLength(0);
  });

  it("renders parallel equal-length arrows for a uniform +x field", () => {
    const rows: [number, number, number, number][] = [];
    for (let y = 8; y < 256; y += 16) {
      for (let x = 8; x < 256; x += 16) {
        rows.push([x, y, 1.5, 0]);
      }
    }
    const arrows = arrowsFrom(field(rows));
    expect(arrows).toHaveLength(rows.length);
    for (const a of arrows) {
      expect(a.dx).toBe(1.5);
      expect(a.dy).toBe(0);
      expect(Math.hypot(a.dx, a.dy)).toBeCloseTo(1.5);
    }
  });

  it("keeps only the rows with measurable displacement", () => {
    const arrows = arrowsFrom(
      field([
        [8, 8, 0, 0],
        [24, 8, 0.5, -0.25],
        [40, 8, 1e-9, 0],
      ]),
    );
    expect(arrows).toEqual([{ x: 24, y: 8, dx: 0.5, dy: -0.25 }]);
  });
});

describe("psf mosaic tiling", () => {
  it("splits an 8x8 mosaic of 33-px tiles into 64 tiles", () => {
    const tiles = gridTiles(264, 264, 8);
    expect(tiles).toHaveLength(64);
    expect(tiles.every((t) => t.size === 33)).toBe(true);
    expect(tiles[0]).toMatchObject({ index: 0, row: 0, col: 0, sx: 0, sy: 0 });
    expect(tiles[63]).toMatchObject({ index: 63, row: 7, col: 7, sx: 231, sy: 231 });
  });

  it("indexes tiles row-major", () => {
    const tiles = gridTiles(264, 264, 8);
    expect(tiles[8 * 2 + 5]).toMatchObject({ row: 2, col: 5, index: 21 });
  });

  it("hit-tests points to the tile underneath", () => {
    const tiles = gridTiles(264, 264, 8);
    expect(tileAt(tiles, 8, 0, 0)?.index).toBe(0);
    expect(tileAt(tiles, 8, 100, 50)?.index).toBe(8 * 1 + 3);
    expect(tileAt(tiles, 8, 263, 263)?.index).toBe(63);
    expect(tileAt(tiles, 8, 300, 10)).toBeNull();
    expect(tileAt(tiles, 8, -1, 10)).toBeNull();
  });

  it("rejects a mosaic that does not divide evenly", () => {
    expect(() => gridTiles(264, 200, 8)).toThrow(/does not split/);
  });
});

describe("psf grid panel", () => {
  it("shows a zoom labeled with the hovered tile index", () => {
    const root = document.createElement("div");
    const panel = new PsfGridPanel(root);
    panel.setImage("blob:mock", 264, 264, 8);
    expect(panel.tileCount).toBe(64);

    const tile = panel.hover(100, 50); // col 3, row 1
    expect(tile?.index).toBe(11);
    expect(panel.zoom.hidden).toBe(false);
    expect(panel.label.textContent).toBe("tile 11");

    panel.hover(263, 263);
    expect(panel.label.textContent).toBe("tile 63");
  });

  it("hides the zoom off-mosaic and on leave", () => {
    const root = document.createElement("div");
    const panel = new PsfGridPanel(root);
    panel.setImage("blob:mock", 264, 264, 8);
    panel.hover(50, 50);
    expect(panel.zoom.hidden).toBe(false);
    panel.hover(500, 50);
    expect(panel.zoom.hidden).toBe(true);
    panel.hover(50, 50);
    panel.leave();
    expect(panel.zoom.hidden).toBe(true);
  });

  it("magnifies the hovered tile in the zoom box", () => {
    const root = document.createElement("div");
    const panel = new PsfGridPanel(root, 4);
    panel.setImage("blob:mock", 264, 264, 8);
    panel.hover(100, 50);
    expect(panel.zoom.style.width).toBe("132px"); // 33 px * 4
    expect(panel.zoom.style.backgroundPosition).toBe("-396px -132px"); // tile (1,3) * 33 * 4
  });

  it("greys out when marked stale", () => {
    const root = document.createElement("div");
    const panel = new PsfGridPanel(root);
    panel.setStale(true);
    expect(root.classList.contains("stale")).toBe(true);
    panel.setStale(false);
    expect(root.classList.contains("stale")).toBe(false);
  });
});

describe("panel staleness", () => {
  it("flags data older than 2 s", () => {
    const s = new Staleness(2000);
    s.markUpdated(1000);
    expect(s.isStale(2999)).toBe(false);
    expect(s.isStale(3000)).toBe(false);
    expect(s.isStale(3001)).toBe(true);
  });

  it("starts stale before any update", () => {
    expect(new Staleness().isStale(0)).toBe(true);
  });
});
