/** Pan/zoom between projected world meters and canvas pixels.
 *
 * Rasters arrive as pre-rendered PNGs with world-file extents; no tile
 * pyramid. World y grows up, screen y grows down.
 */

import type { Extent } from "./geometry.js";

export class Viewport {
  /** world coordinate at the screen center */
  centerX = 0;
  centerY = 0;
  /** screen pixels per world meter */
  scale = 1;

  constructor(
    public screenW: number,
    public screenH: number,
  ) {}

  worldToScreen(x: number, y: number): [number, number] {
    return [
      this.screenW / 2 + (x - this.centerX) * this.scale,
      this.screenH / 2 - (y - this.centerY) * this.scale,
    ];
  }

  screenToWorld(sx: number, sy: number): [number, number] {
    return [
      this.centerX + (sx - this.screenW / 2) / this.scale,
      this.centerY - (sy - this.screenH / 2) / this.scale,
    ];
  }

  panByPixels(dx: number, dy: number): void {
    this.centerX -= dx / this.scale;
    this.centerY += dy / this.scale;
  }

  /** Zoom by `factor` keeping the world point under (sx, sy) fixed. */
  zoomAt(sx: number, sy: number, factor: number): void {
    const [wx, wy] = this.screenToWorld(sx, sy);
    this.scale *= factor;
    const [nx, ny] = this.screenToWorld(sx, sy);
    this.centerX += wx - nx;
    this.centerY += wy - ny;
  }

  fitExtent(e: Extent, padding = 0.05): void {
    const w = e.maxX - e.minX;
    const h = e.maxY - e.minY;
    this.centerX = (e.minX + e.maxX) / 2;
    this.centerY = (e.minY + e.maxY) / 2;
    const sx = this.screenW / (w * (1 + 2 * padding));
    const sy = this.screenH / (h * (1 + 2 * padding));
    this.scale = Math.min(sx, sy);
  }
}

/** Six-line ESRI world file -> extent of a width x height image. The stored
 * origin is the *center* of pixel (0,0). */
export function extentFromWorldFile(text: string, width: number, height: number): Extent {
  const values = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0)
    .map(Number);
  if (values.length !== 6 || values.some((v) => Number.isNaN(v))) {
    throw new Error("world file must have 6 numeric lines");
  }
  const [pw, , , nph, cx, cy] = values as [number, number, number, number, number, number];
  const ph = -nph;
  const originX = cx - pw / 2;
  const originY = cy + ph / 2;
  return {
    minX: originX,
    maxX: originX + width * pw,
    maxY: originY,
    minY: originY - height * ph,
  };
}
