import { describe, expect, it } from "vitest";

import type { ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import type {
  CandidatePayload,
  CandidatesResponse,
  MetricsResponse,
  PostReviewResult,
  ReviewAction,
} from "../src/types.js";

function candidate(id: string, area: number): CandidatePayload {
  return {
    id,
    source_tile: id.split("@")[0]!,
    peak_prob: 0.9,
    mean_prob: 0.7,
    area_m2: area,
    geometry: { type: "Polygon", coordinates: [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]] },
  };
}

class FakeApi implements ReviewApi {
  posts: ReviewAction[] = [];
  candidateCalls: number[] = [];
  metricsCalls = 0;
  failPosts = false;

  byThreshold: Record<string, CandidatePayload[]> = {
    "0.5": [candidate("a@t0.5000#1", 10), candidate("b@t0.5000#1", 8)],
    "0.3": [candidate("a@t0.3000#1", 25), candidate("b@t0.3000#1", 11), candidate("c@t0.3000#1", 5)],
  };

  async getCandidates(_run: string, threshold: number): Promise<CandidatesResponse> {
    this.candidateCalls.push(threshold);
    const cands = this.byThreshold[String(threshold)] ?? [];
    return {
      v: 1,
      threshold,
      count: cands.length,
      covered_area_m2: cands.reduce((s, c) => s + c.area_m2, 0),
      candidates: cands,
    };
  }

  async postReview(_run: string, action: ReviewAction): Promise<PostReviewResult> {
    if (this.failPosts) throw new Error("offline");
    this.posts.push(action);
    return { status: 200, ok: true, duplicate: false };
  }

  async getMetrics(): Promise<MetricsResponse> {
    this.metricsCalls += 1;
    return {
      v: 1,
      automatic: { counts: { tp: 1, tn: 1, fp: 1, fn: 1 }, metrics: { accuracy: 0.5, recall: 0.5, precision: 0.5 } },
    };
  }
}

function makeSession() {
  const api = new FakeApi();
  let tick = 0;
  const session = new ReviewSession(api, "r1", "vo", () => `ts${tick++}`);
  return { api, session };
}

describe("threshold steering", () => {
  it("refetches candidates and never posts", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    await session.setThreshold(0.3);
    expect(api.candidateCalls).toEqual([0.5, 0.3]);
    expect(api.posts).toEqual([]); // pure reads
    expect(session.candidates.length).toBe(3);
  });

  it("covered area grows as the threshold drops", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    const high = session.candidates.reduce((s, c) => s + c.area_m2, 0);
    await session.setThreshold(0.3);
    const low = session.candidates.reduce((s, c) => s + c.area_m2, 0);
    expect(low).toBeGreaterThanOrEqual(high);
  });

  it("rejects thresholds outside [0, 1]", async () => {
    const { session } = makeSession();
    await expect(session.setThreshold(1.5)).rejects.toThrow(/threshold/);
  });
});

describe("layers and cursor", () => {
  it("layer toggles leave candidates untouched", async () => {
    const { session } = makeSession();
    await session.setThreshold(0.5);
    const before = session.candidates;
    session.toggleLayer("annotations");
    session.toggleLayer("heatmap");
    expect(session.candidates).toBe(before);
    expect(session.layers.annotations).toBe(false);
  });

  it("cursor wraps in both directions", async () => {
    const { session } = makeSession();
    await session.setThreshold(0.5);
    expect(session.current()!.id).toBe("a@t0.5000#1");
    session.next();
    expect(session.current()!.id).toBe("b@t0.5000#1");
    session.next();
    expect(session.current()!.id).toBe("a@t0.5000#1");
    session.prev();
    expect(session.current()!.id).toBe("b@t0.5000#1");
  });
});

describe("triage", () => {
  it("accept posts the action and records an optimistic chip", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    await session.judgeCurrent("accept");
    expect(api.posts.length).toBe(1);
    expect(api.posts[0]).toMatchObject({ candidate_id: "a@t0.5000#1", verdict: "accept", reviewer: "vo" });
    expect(session.verdicts.get("a@t0.5000#1")).toBe("accept");
  });

  it("relabel with a self-intersecting ring posts nothing", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    const bowtie = { type: "Polygon" as const, coordinates: [[[0, 0], [2, 2], [2, 0], [0, 2], [0, 0]]] };
    await expect(session.relabelCurrent(bowtie)).rejects.toThrow(/invalid polygon/);
    expect(api.posts).toEqual([]);
  });

  it("valid relabel posts the new polygon", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    const square = { type: "Polygon" as const, coordinates: [[[0, 0], [3, 0], [3, 3], [0, 3], [0, 0]]] };
    await session.relabelCurrent(square);
    expect(api.posts[0]).toMatchObject({ verdict: "relabel", new_polygon: square });
  });

  it("mark_not_visible references the site", async () => {
    const { api, session } = makeSession();
    await session.markSiteNotVisible("s2");
    expect(api.posts[0]).toMatchObject({ site_id: "s2", verdict: "mark_not_visible" });
  });
});

describe("offline behavior", () => {
  it("queues while offline and replays in order on demand", async () => {
    const { api, session } = makeSession();
    await session.setThreshold(0.5);
    api.failPosts = true;
    await session.judgeCurrent("accept");
    session.next();
    await session.judgeCurrent("reject");
    expect(api.posts).toEqual([]);
    expect(session.queue.pending().length).toBe(2);

    api.failPosts = false;
    await session.replayPending();
    expect(api.posts.map((a) => a.verdict)).toEqual(["accept", "reject"]);
    expect(session.queue.pending().length).toBe(0);
  });

  it("exports the ordered session log", async () => {
    const { session } = makeSession();
    await session.setThreshold(0.5);
    await session.judgeCurrent("accept");
    session.next();
    await session.judgeCurrent("reject");
    const log = session.exportLog();
    expect(log.map((a) => [a.candidate_id, a.verdict])).toEqual([
      ["a@t0.5000#1", "accept"],
      ["b@t0.5000#1", "reject"],
    ]);
  });
});
