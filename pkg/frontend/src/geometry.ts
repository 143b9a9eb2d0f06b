/** Client-side polygon checks so a bad relabel never reaches the server. */

import type { GeoJsonPolygon } from "./types.js";

export type Ring = Array<[number, number]>;

export function ringClosed(ring: Ring): boolean {
  if (ring.length < 4) return false;
  const first = ring[0]!;
  const last = ring[ring.length - 1]!;
  return first[0] === last[0] && first[1] === last[1];
}

function orient(a: [number, number], b: [number, number], c: [number, number]): number {
  const v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
  return v > 0 ? 1 : v < 0 ? -1 : 0;
}

function segmentsCross(p1: [number, number], p2: [number, number], p3: [number, number], p4: [number, number]): boolean {
  const o1 = orient(p1, p2, p3);
  const o2 = orient(p1, p2, p4);
  const o3 = orient(p3, p4, p1);
  const o4 = orient(p3, p4, p2);
  return o1 !== o2 && o3 !== o4 && o1 !== 0 && o2 !== 0 && o3 !== 0 && o4 !== 0;
}

/** True when no two non-adjacent edges properly cross. */
export function ringIsSimple(ring: Ring): boolean {
  if (!ringClosed(ring)) return false;
  const n = ring.length - 1;
  for (let i = 0; i < n; i++) {
    for (let j = i + 2; j < n; j++) {
      if (i === 0 && j === n - 1) continue;
      if (segmentsCross(ring[i]!, ring[i + 1]!, ring[j]!, ring[j + 1]!)) return false;
    }
  }
  return true;
}

export interface ValidationResult {
  ok: boolean;
  reason?: string;
}

export function validatePolygon(geom: GeoJsonPolygon): ValidationResult {
  if (geom.type !== "Polygon" || !Array.isArray(geom.coordinates) || geom.coordinates.length === 0) {
    return { ok: false, reason: "not a Polygon geometry" };
  }
  for (const [i, raw] of geom.coordinates.entries()) {
    const ring = raw.map((p) => [p[0]!, p[1]!] as [number, number]);
    if (!ringClosed(ring)) return { ok: false, reason: `ring ${i} is open or too short` };
    if (!ringIsSimple(ring)) return { ok: false, reason: `ring ${i} self-intersects` };
  }
  return { ok: true };
}

export interface Extent {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export function polygonExtent(geom: GeoJsonPolygon): Extent {
  let minX = Infinity,
    minY = Infinity,
    maxX = -Infinity,
    maxY = -Infinity;
  for (const p of geom.coordinates[0] ?? []) {
    minX = Math.min(minX, p[0]!);
    maxX = Math.max(maxX, p[0]!);
    minY = Math.min(minY, p[1]!);
    maxY = Math.max(maxY, p[1]!);
  }
  return { minX, minY, maxX, maxY };
}

export function unionExtents(extents: Extent[]): Extent | null {
  if (extents.length === 0) return null;
  return extents.reduce((a, b) => ({
    minX: Math.min(a.minX, b.minX),
    minY: Math.min(a.minY, b.minY),
    maxX: Math.max(a.maxX, b.maxX),
    maxY: Math.max(a.maxY, b.maxY),
  }));
}
