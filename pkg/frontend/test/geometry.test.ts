import { describe, expect, it } from "vitest";

import { polygonExtent, ringClosed, ringIsSimple, validatePolygon } from "../src/geometry.js";
import type { GeoJsonPolygon } from "../src/types.js";

const square: GeoJsonPolygon = {
  type: "Polygon",
  coordinates: [[[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]]],
};

const bowtie: GeoJsonPolygon = {
  type: "Polygon",
  coordinates: [[[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]]],
};

describe("ring checks", () => {
  it("accepts a closed square", () => {
    expect(ringClosed([[0, 0], [1, 0], [1, 1], [0, 0]])).toBe(true);
    expect(ringIsSimple([[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]])).toBe(true);
  });

  it("rejects open or short rings", () => {
    expect(ringClosed([[0, 0], [1, 0], [1, 1], [0, 1]])).toBe(false);
    expect(ringClosed([[0, 0], [1, 0], [0, 0]])).toBe(false);
  });

  it("detects self-intersection", () => {
    expect(ringIsSimple([[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]])).toBe(false);
  });
});

describe("validatePolygon", () => {
  it("passes a valid polygon with a hole", () => {
    const withHole: GeoJsonPolygon = {
      type: "Polygon",
      coordinates: [
        [[0, 0], [4, 0], [4, 4], [0, 4], [0, 0]],
        [[1, 1], [1, 2], [2, 2], [2, 1], [1, 1]],
      ],
    };
    expect(validatePolygon(withHole).ok).toBe(true);
  });

  it("rejects a bowtie with a reason", () => {
    const res = validatePolygon(bowtie);
    expect(res.ok).toBe(false);
    expect(res.reason).toMatch(/self-intersects/);
  });

  it("rejects an open ring", () => {
    const open: GeoJsonPolygon = { type: "Polygon", coordinates: [[[0, 0], [1, 0], [1, 1]]] };
    expect(validatePolygon(open).ok).toBe(false);
  });
});

describe("polygonExtent", () => {
  it("covers the exterior ring", () => {
    expect(polygonExtent(square)).toEqual({ minX: 0, minY: 0, maxX: 4, maxY: 4 });
  });
});
