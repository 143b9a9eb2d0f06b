/** Browser bootstrap: wires the session, viewport and canvas to the DOM.
 * Serve the built files next to a running review service, e.g.
 *   moundline serve --port 8008
 *   python3 -m http.server 8080   (from frontend/)
 * then open http://127.0.0.1:8080/?api=http://127.0.0.1:8008&run=<id>
 */

import { ApiClient } from "./api.js";
import { makeKeyHandler } from "./keyboard.js";
import { drawCandidates, drawRaster, fitToCandidates } from "./render.js";
import { ReviewSession } from "./session.js";
import { Viewport } from "./viewport.js";
import type { Extent } from "./geometry.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "http://127.0.0.1:8008";
  const api = new ApiClient(apiBase);

  const runs = await api.listRuns();
  const runId = params.get("run") ?? runs.runs[0]?.id;
  if (!runId) {
    el<HTMLDivElement>("status").textContent = "no runs on the server";
    return;
  }
  const reviewer = params.get("reviewer") ?? "reviewer";
  const session = new ReviewSession(api, runId, reviewer);

  const canvas = el<HTMLCanvasElement>("map");
  const ctx = canvas.getContext("2d")!;
  const vp = new Viewport(canvas.width, canvas.height);

  let heatmap: { image: HTMLImageElement; extent: Extent } | null = null;
  const heatImg = new Image();
  heatImg.crossOrigin = "anonymous";
  heatImg.onload = () => {
    // extent metadata travels with the run config; default to image pixels
    heatmap = {
      image: heatImg,
      extent: { minX: 0, minY: 0, maxX: heatImg.width, maxY: heatImg.height },
    };
    vp.fitExtent(heatmap.extent);
    redraw();
  };
  heatImg.onerror = () => {
    heatmap = null;
  };
  heatImg.src = api.heatmapUrl(runId);

  function redraw(): void {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (heatmap && session.layers.heatmap) {
      drawRaster(ctx, heatmap, vp, session.overlayOpacity);
    }
    if (session.layers.candidates) {
      drawCandidates(ctx, session.candidates, session.verdicts, session.current()?.id, vp);
    }
    el<HTMLDivElement>("status").textContent =
      `run ${runId} | t=${session.threshold.toFixed(2)} | ` +
      `${session.candidates.length} candidates | cursor ${session.cursor + 1} | ` +
      `pending ${session.queue.pending().length} conflicts ${session.queue.conflicts().length}`;
  }

  const thresholdInput = el<HTMLInputElement>("threshold");
  thresholdInput.addEventListener("input", async () => {
    await session.setThreshold(Number(thresholdInput.value));
    fitToCandidates(vp, session.candidates);
    redraw();
  });
  const opacityInput = el<HTMLInputElement>("opacity");
  opacityInput.addEventListener("input", () => {
    session.setOpacity(Number(opacityInput.value));
    redraw();
  });

  let dragging = false;
  let last: [number, number] = [0, 0];
  canvas.addEventListener("mousedown", (e) => {
    dragging = true;
    last = [e.offsetX, e.offsetY];
  });
  canvas.addEventListener("mouseup", () => (dragging = false));
  canvas.addEventListener("mousemove", (e) => {
    if (!dragging) return;
    vp.panByPixels(e.offsetX - last[0], e.offsetY - last[1]);
    last = [e.offsetX, e.offsetY];
    redraw();
  });
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    vp.zoomAt(e.offsetX, e.offsetY, e.deltaY < 0 ? 1.2 : 1 / 1.2);
    redraw();
  });

  const handler = makeKeyHandler(session, {
    onError: (err) => (el<HTMLDivElement>("status").textContent = String(err)),
  });
  window.addEventListener("keydown", async (e) => {
    await handler(e);
    redraw();
  });

  el<HTMLButtonElement>("export").addEventListener("click", async () => {
    const log = session.exportLog();
    const blob = new Blob([JSON.stringify(log, null, 2)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${runId}-session.json`;
    a.click();
  });

  await session.setThreshold(0.5);
  fitToCandidates(vp, session.candidates);
  redraw();
}

boot().catch((e) => {
  const status = document.getElementById("status");
  if (status) status.textContent = String(e);
});
