/** Review session state: threshold steering, layer toggles, candidate
 * triage. Threshold changes only ever GET; server state moves exclusively
 * through posted review actions. */

import type { ReviewApi } from "./api.js";
import { validatePolygon } from "./geometry.js";
import { ActionQueue } from "./queue.js";
import type { CandidatePayload, GeoJsonPolygon, ReviewAction, Verdict } from "./types.js";

export interface LayerState {
  base: boolean;
  heatmap: boolean;
  candidates: boolean;
  annotations: boolean;
}

export type Clock = () => string;

export class ReviewSession {
  threshold = 0.5;
  overlayOpacity = 0.6;
  layers: LayerState = { base: true, heatmap: true, candidates: true, annotations: true };
  candidates: CandidatePayload[] = [];
  cursor = 0;
  /** local verdict chips, keyed by candidate id, confirmed or not */
  verdicts = new Map<string, Verdict>();
  readonly queue: ActionQueue;

  constructor(
    private readonly api: ReviewApi,
    readonly runId: string,
    readonly reviewer: string,
    private readonly now: Clock = () => new Date().toISOString(),
  ) {
    this.queue = new ActionQueue((a: ReviewAction) => this.api.postReview(this.runId, a));
  }

  /** Slider move: refetch candidates at the new threshold. Pure read. */
  async setThreshold(t: number): Promise<void> {
    if (t < 0 || t > 1) throw new Error("threshold must be in [0, 1]");
    this.threshold = t;
    const res = await this.api.getCandidates(this.runId, t);
    this.candidates = res.candidates;
    this.cursor = Math.min(this.cursor, Math.max(0, this.candidates.length - 1));
  }

  setOpacity(v: number): void {
    this.overlayOpacity = Math.max(0, Math.min(1, v));
  }

  toggleLayer(name: keyof LayerState): void {
    this.layers[name] = !this.layers[name];
  }

  current(): CandidatePayload | undefined {
    return this.candidates[this.cursor];
  }

  next(): void {
    if (this.candidates.length) this.cursor = (this.cursor + 1) % this.candidates.length;
  }

  prev(): void {
    if (this.candidates.length)
      this.cursor = (this.cursor - 1 + this.candidates.length) % this.candidates.length;
  }

  private enqueue(action: ReviewAction): Promise<void> {
    this.queue.enqueue(action);
    return this.queue.flush();
  }

  /** accept/reject the candidate under the cursor (optimistic chip first). */
  async judgeCurrent(verdict: "accept" | "reject"): Promise<void> {
    const cand = this.current();
    if (!cand) return;
    this.verdicts.set(cand.id, verdict);
    await this.enqueue({
      v: 1,
      candidate_id: cand.id,
      verdict,
      reviewer: this.reviewer,
      timestamp: this.now(),
    });
  }

  /** Flag a ground-truth site as no longer visible on current imagery. */
  async markSiteNotVisible(siteId: string): Promise<void> {
    await this.enqueue({
      v: 1,
      site_id: siteId,
      verdict: "mark_not_visible",
      reviewer: this.reviewer,
      timestamp: this.now(),
    });
  }

  /** Replace the current candidate's outline. Validation failures throw and
   * nothing is posted. */
  async relabelCurrent(polygon: GeoJsonPolygon): Promise<void> {
    const cand = this.current();
    if (!cand) return;
    const check = validatePolygon(polygon);
    if (!check.ok) throw new Error(`invalid polygon: ${check.reason}`);
    this.verdicts.set(cand.id, "relabel");
    await this.enqueue({
      v: 1,
      candidate_id: cand.id,
      verdict: "relabel",
      new_polygon: polygon,
      reviewer: this.reviewer,
      timestamp: this.now(),
    });
  }

  /** Retry anything the last flush left behind (offline recovery). */
  replayPending(): Promise<void> {
    return this.queue.flush();
  }

  /** Session export: the ordered action log. */
  exportLog(): ReviewAction[] {
    return this.queue.exportLog();
  }

  metrics(adjusted: boolean) {
    return this.api.getMetrics(this.runId, adjusted);
  }
}
