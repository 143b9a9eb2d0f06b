/** Strictly ordered optimistic action queue with offline replay.
 *
 * Actions apply to the UI immediately (the caller updates its own state) and
 * are confirmed against the server in enqueue order. A network failure stops
 * the flush and leaves the tail pending for the next attempt; a 409 from the
 * server marks the action conflicted and is surfaced, not retried.
 */

import type { PostReviewResult, ReviewAction } from "./types.js";

export type ItemState = "pending" | "inflight" | "confirmed" | "conflict" | "rejected";

export interface QueueItem {
  action: ReviewAction;
  state: ItemState;
  detail?: string;
}

export type PostFn = (action: ReviewAction) => Promise<PostReviewResult>;

export function actionKey(a: ReviewAction): string {
  return `${a.candidate_id ?? a.site_id ?? ""}|${a.reviewer}|${a.timestamp}`;
}

function samePayload(a: ReviewAction, b: ReviewAction): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

export class ActionQueue {
  private items: QueueItem[] = [];
  private flushing = false;

  constructor(private readonly post: PostFn) {}

  /** Add an action. Re-submitting an identical action is a no-op (dedup);
   * a different action under the same idempotency key is refused locally. */
  enqueue(action: ReviewAction): QueueItem {
    const key = actionKey(action);
    for (const item of this.items) {
      if (actionKey(item.action) === key) {
        if (samePayload(item.action, action)) return item;
        throw new Error(`another action already uses key ${key}`);
      }
    }
    const item: QueueItem = { action, state: "pending" };
    this.items.push(item);
    return item;
  }

  /** Confirm pending actions in order. Stops at the first network failure
   * (offline); server rejections mark the item and continue. */
  async flush(): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    try {
      for (const item of this.items) {
        if (item.state !== "pending") continue;
        item.state = "inflight";
        let result: PostReviewResult;
        try {
          result = await this.post(item.action);
        } catch {
          item.state = "pending"; // offline: keep for replay
          return;
        }
        if (result.ok) {
          item.state = "confirmed";
        } else if (result.status === 409) {
          item.state = "conflict";
          item.detail = result.detail;
        } else {
          item.state = "rejected";
          item.detail = result.detail ?? `status ${result.status}`;
        }
      }
    } finally {
      this.flushing = false;
    }
  }

  pending(): QueueItem[] {
    return this.items.filter((i) => i.state === "pending");
  }

  conflicts(): QueueItem[] {
    return this.items.filter((i) => i.state === "conflict");
  }

  all(): readonly QueueItem[] {
    return this.items;
  }

  /** Ordered action log of everything worth replaying on a fresh server. */
  exportLog(): ReviewAction[] {
    return this.items
      .filter((i) => i.state === "confirmed" || i.state === "pending" || i.state === "inflight")
      .map((i) => i.action);
  }
}
