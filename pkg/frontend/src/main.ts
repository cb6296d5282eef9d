import { ApiClient } from "./api";
import { fitScale, drawContour, drawScribble } from "./render";
import {
  COLORS,
  Store,
  cancelStroke,
  endStroke,
  extendStroke,
  frameScribbles,
  iteration,
  nextFrame,
  startStroke,
  submittable,
} from "./state";
import type { Metrics, Point } from "./types";

const api = new ApiClient("");
const store = new Store(api);

const el = {
  caseInput: document.getElementById("case-input") as HTMLInputElement,
  engineSelect: document.getElementById("engine-select") as HTMLSelectElement,
  sessionInput: document.getElementById("session-input") as HTMLInputElement,
  attachBtn: document.getElementById("attach-btn") as HTMLButtonElement,
  canvas: document.getElementById("frame-canvas") as HTMLCanvasElement,
  frameLabel: document.getElementById("frame-label") as HTMLSpanElement,
  prevBtn: document.getElementById("prev-btn") as HTMLButtonElement,
  nextBtn: document.getElementById("next-btn") as HTMLButtonElement,
  submitBtn: document.getElementById("submit-btn") as HTMLButtonElement,
  undoBtn: document.getElementById("undo-btn") as HTMLButtonElement,
  exportLink: document.getElementById("export-link") as HTMLAnchorElement,
  metricsBody: document.getElementById("metrics-body") as HTMLTableSectionElement,
  toast: document.getElementById("toast") as HTMLDivElement,
  sessionLabel: document.getElementById("session-label") as HTMLSpanElement,
  toggles: {
    cas: document.getElementById("toggle-cas") as HTMLInputElement,
    initial: document.getElementById("toggle-initial") as HTMLInputElement,
    current: document.getElementById("toggle-current") as HTMLInputElement,
  },
};

const images = new Map<number, HTMLImageElement>();
let renderQueued = false;

function canvasPoint(ev: PointerEvent): Point {
  const rect = el.canvas.getBoundingClientRect();
  const frame = store.state.frames.find((f) => f.frame_id === store.state.activeFrame);
  const scale = frame ? fitScale(frame.rows, frame.cols) : 1;
  return {
    r: (ev.clientY - rect.top) / scale - 0.5,
    c: (ev.clientX - rect.left) / scale - 0.5,
  };
}

async function render(): Promise<void> {
  if (renderQueued) return;
  renderQueued = true;
  await Promise.resolve();
  renderQueued = false;

  const s = store.state;
  el.submitBtn.disabled = !submittable(s);
  el.undoBtn.disabled = s.inFlight || s.history.length === 0;
  el.toast.textContent = s.toast ?? "";
  el.toast.classList.toggle("visible", s.toast !== null);
  el.sessionLabel.textContent = s.sessionId ? `session ${s.sessionId.slice(0, 8)}…` : "";
  if (s.sessionId) {
    el.exportLink.href = api.exportMaskUrl(s.sessionId);
    el.exportLink.classList.remove("disabled");
  }
  renderMetrics(s.history.map((h) => h.metrics));
  if (!s.sessionId || s.frames.length === 0) return;

  const frame = s.frames.find((f) => f.frame_id === s.activeFrame)!;
  el.frameLabel.textContent = `frame ${frame.frame_id} / ${s.frames.length} (${(
    (frame.angle_rad * 180) / Math.PI
  ).toFixed(1)}°)`;
  const scale = fitScale(frame.rows, frame.cols);
  el.canvas.width = frame.cols * scale;
  el.canvas.height = frame.rows * scale;
  const ctx = el.canvas.getContext("2d")!;
  ctx.imageSmoothingEnabled = false;
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, el.canvas.width, el.canvas.height);

  // z-order: image < initial < current < cas < scribble
  const img = images.get(frame.frame_id);
  if (img && img.complete) {
    ctx.drawImage(img, 0, 0, el.canvas.width, el.canvas.height);
  } else if (!img) {
    const fresh = new Image();
    fresh.onload = () => void render();
    fresh.src = store.imageUrl(frame.frame_id);
    images.set(frame.frame_id, fresh);
  }
  try {
    const contours = await store.contours(frame.frame_id);
    if (s.overlays.initial) drawContour(ctx, contours.initial, COLORS.initial, scale, 2);
    if (s.overlays.current) drawContour(ctx, contours.current, COLORS.current, scale, 2);
    if (s.overlays.cas) drawContour(ctx, contours.cas, COLORS.cas, scale, 1);
  } catch {
    /* contours fetch failed; overlays resume on next render */
  }
  for (const past of frameScribbles(s, frame.frame_id)) {
    drawScribble(ctx, past, scale, false);
  }
  drawScribble(ctx, s.pending, scale, true);
}

function renderMetrics(history: Metrics[]): void {
  el.metricsBody.innerHTML = "";
  history.forEach((m, t) => {
    const tr = document.createElement("tr");
    const fmt = (v: number | null) => (v === null ? "–" : v.toFixed(3));
    tr.innerHTML =
      `<td>${t}</td><td>${fmt(m.overall_p95_mm)}</td>` +
      `<td>${fmt(m.near_p95_mm)}</td><td>${fmt(m.far_p95_mm)}</td>`;
    el.metricsBody.appendChild(tr);
  });
}

function wireEvents(): void {
  el.attachBtn.addEventListener("click", () => {
    const sid = el.sessionInput.value.trim() || undefined;
    void store
      .attach(el.caseInput.value.trim(), el.engineSelect.value, sid)
      .then(() => {
        images.clear();
        if (sid === undefined) el.sessionInput.value = "";
      })
      .catch((err) => store.dispatch((s) => ({ ...s, toast: String(err) })));
  });
  el.prevBtn.addEventListener("click", () => store.dispatch((s) => nextFrame(s, -1)));
  el.nextBtn.addEventListener("click", () => store.dispatch((s) => nextFrame(s, 1)));
  el.submitBtn.addEventListener("click", () => void store.submitPending());
  el.undoBtn.addEventListener("click", () => void store.undo());
  for (const key of ["cas", "initial", "current"] as const) {
    el.toggles[key].addEventListener("change", () =>
      store.dispatch((s) => ({
        ...s,
        overlays: { ...s.overlays, [key]: el.toggles[key].checked },
      })),
    );
  }
  el.canvas.addEventListener("pointerdown", (ev) => {
    if (store.state.inFlight) return;
    el.canvas.setPointerCapture(ev.pointerId);
    store.dispatch((s) => startStroke(s, canvasPoint(ev)));
  });
  el.canvas.addEventListener("pointermove", (ev) => {
    store.dispatch((s) => extendStroke(s, canvasPoint(ev)));
  });
  el.canvas.addEventListener("pointerup", () => store.dispatch(endStroke));
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "Escape") store.dispatch(cancelStroke);
    if (ev.key === "ArrowLeft") store.dispatch((s) => nextFrame(s, -1));
    if (ev.key === "ArrowRight") store.dispatch((s) => nextFrame(s, 1));
  });
  store.subscribe(() => void render());
}

wireEvents();
void render();

// surface for debugging in the console
declare global {
  interface Window {
    voxeledit: { store: Store; iteration: () => number };
  }
}
window.voxeledit = { store, iteration: () => iteration(store.state) };
