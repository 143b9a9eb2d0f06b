/** Wire types for the review service. Every JSON body is versioned with v: 1. */

export interface GeoJsonPolygon {
  type: "Polygon";
  coordinates: number[][][];
}

export type Verdict = "accept" | "reject" | "mark_not_visible" | "relabel";

export interface ReviewAction {
  v: 1;
  candidate_id?: string | null;
  site_id?: string | null;
  verdict: Verdict;
  new_polygon?: GeoJsonPolygon | null;
  reviewer: string;
  timestamp: string;
}

export interface CandidatePayload {
  id: string;
  source_tile: string;
  peak_prob: number;
  mean_prob: number;
  area_m2: number;
  geometry: GeoJsonPolygon;
}

export interface CandidatesResponse {
  v: 1;
  threshold: number;
  count: number;
  covered_area_m2: number;
  candidates: CandidatePayload[];
}

export interface ConfusionCounts {
  tp: number;
  tn: number;
  fp: number;
  fn: number;
}

export interface MetricsBlock {
  counts: ConfusionCounts;
  metrics: { accuracy: number | null; recall: number | null; precision: number | null };
}

export interface MetricsResponse {
  v: 1;
  automatic: MetricsBlock;
  adjusted?: MetricsBlock;
  ledger?: unknown[];
}

export interface RunSummary {
  id: string;
  status: Record<string, boolean>;
}

export interface RunsResponse {
  v: 1;
  runs: RunSummary[];
}

export interface PostReviewResult {
  status: number;
  ok: boolean;
  duplicate: boolean;
  detail?: string;
}
