/** Keyboard triage: one hand on the keyboard, eyes on the imagery. */

import { ReviewSession } from "./session.js";

export interface KeyEventLike {
  key: string;
  shiftKey?: boolean;
}

export interface KeyboardHooks {
  /** relabel needs an editor; the UI supplies the drawn polygon later */
  onRelabelRequested?: () => void;
  /** mark_not_visible applies to a selected gt site, if any */
  selectedSiteId?: () => string | undefined;
  onError?: (e: Error) => void;
}

export const KEY_HELP: Record<string, string> = {
  a: "accept candidate",
  x: "reject candidate",
  n: "mark selected site not visible",
  e: "edit (relabel) candidate outline",
  j: "next candidate",
  k: "previous candidate",
  "[": "lower threshold by 0.05",
  "]": "raise threshold by 0.05",
  h: "toggle heatmap layer",
  g: "toggle ground-truth layer",
  c: "toggle candidate layer",
};

export function makeKeyHandler(session: ReviewSession, hooks: KeyboardHooks = {}) {
  return async (ev: KeyEventLike): Promise<void> => {
    try {
      switch (ev.key) {
        case "a":
          await session.judgeCurrent("accept");
          break;
        case "x":
          await session.judgeCurrent("reject");
          break;
        case "n": {
          const site = hooks.selectedSiteId?.();
          if (site) await session.markSiteNotVisible(site);
          break;
        }
        case "e":
          hooks.onRelabelRequested?.();
          break;
        case "j":
        case "ArrowRight":
          session.next();
          break;
        case "k":
        case "ArrowLeft":
          session.prev();
          break;
        case "[":
          await session.setThreshold(Math.max(0, Math.round((session.threshold - 0.05) * 100) / 100));
          break;
        case "]":
          await session.setThreshold(Math.min(1, Math.round((session.threshold + 0.05) * 100) / 100));
          break;
        case "h":
          session.toggleLayer("heatmap");
          break;
        case "g":
          session.toggleLayer("annotations");
          break;
        case "c":
          session.toggleLayer("candidates");
          break;
        default:
          break;
      }
    } catch (e) {
      hooks.onError?.(e as Error);
    }
  };
}
