/** Canvas composition of the layer stack. Deliberately thin: all state lives
 * in ReviewSession and Viewport. */

import type { Extent } from "./geometry.js";
import { polygonExtent } from "./geometry.js";
import { Viewport } from "./viewport.js";
import type { CandidatePayload, GeoJsonPolygon, Verdict } from "./types.js";

export interface RasterLayer {
  image: CanvasImageSource;
  extent: Extent;
}

export function drawRaster(
  ctx: CanvasRenderingContext2D,
  layer: RasterLayer,
  vp: Viewport,
  opacity = 1.0,
): void {
  const [sx0, sy0] = vp.worldToScreen(layer.extent.minX, layer.extent.maxY);
  const [sx1, sy1] = vp.worldToScreen(layer.extent.maxX, layer.extent.minY);
  ctx.save();
  ctx.globalAlpha = opacity;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(layer.image, sx0, sy0, sx1 - sx0, sy1 - sy0);
  ctx.restore();
}

function tracePolygon(ctx: CanvasRenderingContext2D, geom: GeoJsonPolygon, vp: Viewport): void {
  ctx.beginPath();
  for (const ring of geom.coordinates) {
    ring.forEach((p, i) => {
      const [sx, sy] = vp.worldToScreen(p[0]!, p[1]!);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.closePath();
  }
}

const VERDICT_COLORS: Record<Verdict, string> = {
  accept: "#35d07f",
  reject: "#e05563",
  relabel: "#b07fe0",
  mark_not_visible: "#999999",
};

export function drawCandidates(
  ctx: CanvasRenderingContext2D,
  candidates: CandidatePayload[],
  verdicts: Map<string, Verdict>,
  cursorId: string | undefined,
  vp: Viewport,
): void {
  for (const c of candidates) {
    const verdict = verdicts.get(c.id);
    ctx.save();
    ctx.lineWidth = c.id === cursorId ? 3 : 1.5;
    ctx.strokeStyle = verdict ? VERDICT_COLORS[verdict] : "#ffd24d";
    tracePolygon(ctx, c.geometry, vp);
    ctx.stroke();
    ctx.restore();
  }
}

export function drawAnnotations(
  ctx: CanvasRenderingContext2D,
  shapes: GeoJsonPolygon[],
  vp: Viewport,
): void {
  ctx.save();
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = "#40e0d0";
  for (const g of shapes) {
    tracePolygon(ctx, g, vp);
    ctx.stroke();
  }
  ctx.restore();
}

export function fitToCandidates(vp: Viewport, candidates: CandidatePayload[]): void {
  if (!candidates.length) return;
  const extents = candidates.map((c) => polygonExtent(c.geometry));
  const union = extents.reduce((a, b) => ({
    minX: Math.min(a.minX, b.minX),
    minY: Math.min(a.minY, b.minY),
    maxX: Math.max(a.maxX, b.maxX),
    maxY: Math.max(a.maxY, b.maxY),
  }));
  vp.fitExtent(union, 0.2);
}
