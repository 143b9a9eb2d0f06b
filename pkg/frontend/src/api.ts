/** Thin typed client over the review service. The UI computes nothing the
 * server already knows: metrics, candidates and exports all come from here. */

import type {
  CandidatesResponse,
  MetricsResponse,
  PostReviewResult,
  ReviewAction,
  RunsResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** What the review session needs from the backend; ApiClient is the real one. */
export interface ReviewApi {
  getCandidates(runId: string, threshold: number): Promise<CandidatesResponse>;
  postReview(runId: string, action: ReviewAction): Promise<PostReviewResult>;
  getMetrics(runId: string, adjusted: boolean): Promise<MetricsResponse>;
}

export class ApiClient implements ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!res.ok) throw new ApiError(res.status, `GET ${path} -> ${res.status}`);
    return (await res.json()) as T;
  }

  listRuns(): Promise<RunsResponse> {
    return this.getJson("/runs");
  }

  getRun(runId: string): Promise<unknown> {
    return this.getJson(`/runs/${runId}`);
  }

  getCandidates(runId: string, threshold: number): Promise<CandidatesResponse> {
    return this.getJson(`/runs/${runId}/candidates?threshold=${threshold}`);
  }

  getMetrics(runId: string, adjusted: boolean): Promise<MetricsResponse> {
    return this.getJson(`/runs/${runId}/metrics?adjusted=${adjusted}`);
  }

  exportAnnotations(runId: string): Promise<unknown> {
    return this.getJson(`/runs/${runId}/export/annotations`);
  }

  heatmapUrl(runId: string): string {
    return `${this.baseUrl}/runs/${runId}/heatmap.png`;
  }

  tileUrl(runId: string, tileId: string): string {
    return `${this.baseUrl}/runs/${runId}/tiles/${tileId}.png`;
  }

  /** POST a review. 409 (conflicting duplicate) is reported, not thrown;
   * network failures reject so the queue can hold the action for replay. */
  async postReview(runId: string, action: ReviewAction): Promise<PostReviewResult> {
    const res = await this.fetchFn(`${this.baseUrl}/runs/${runId}/reviews`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(action),
    });
    if (res.ok) {
      const body = (await res.json()) as { duplicate?: boolean };
      return { status: res.status, ok: true, duplicate: body.duplicate === true };
    }
    let detail = "";
    try {
      const body = (await res.json()) as { detail?: string };
      detail = body.detail ?? "";
    } catch {
      // non-JSON error body; keep status only
    }
    return { status: res.status, ok: false, duplicate: false, detail };
  }
}
