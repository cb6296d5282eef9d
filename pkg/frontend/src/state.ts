import { ApiClient, ApiFailure } from "./api";
import { appendDecimated, canSubmit, toWirePath } from "./path";
import type { Contours, FrameInfo, HistoryRow, Point } from "./types";

/** Fixed overlay stacking, bottom to top. */
export const Z_ORDER = ["image", "initial", "current", "cas", "scribble"] as const;

export const COLORS = {
  initial: "rgba(0, 200, 200, 0.85)", // cyan shade
  current: "rgb(50, 220, 80)", // green contour
  cas: "rgb(235, 80, 80)", // reference contour
  scribble: "rgb(245, 220, 60)", // yellow stroke
} as const;

export interface ViewState {
  sessionId: string | null;
  caseId: string;
  engine: string;
  frames: FrameInfo[];
  activeFrame: number;
  overlays: { cas: boolean; initial: boolean; current: boolean };
  pending: Point[];
  drawing: boolean;
  inFlight: boolean;
  history: HistoryRow[];
  toast: string | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    caseId: "",
    engine: "geometric",
    frames: [],
    activeFrame: 0,
    overlays: { cas: true, initial: true, current: true },
    pending: [],
    drawing: false,
    inFlight: false,
    history: [],
    toast: null,
  };
}

export function iteration(state: ViewState): number {
  return state.history.length - 1;
}

export function submittable(state: ViewState): boolean {
  return !state.inFlight && canSubmit(state.pending);
}

/** Scribbles drawn on the active frame in past iterations (history layer). */
export function frameScribbles(state: ViewState, frameId: number): Point[][] {
  return state.history.filter((h) => h.frameId === frameId).map((h) => h.path);
}

// ---------------------------------------------------------------------------
// Pure transitions
// ---------------------------------------------------------------------------

export function startStroke(state: ViewState, p: Point): ViewState {
  return { ...state, drawing: true, pending: [p], toast: null };
}

export function extendStroke(state: ViewState, p: Point): ViewState {
  if (!state.drawing) return state;
  return { ...state, pending: appendDecimated(state.pending, p) };
}

export function endStroke(state: ViewState): ViewState {
  return { ...state, drawing: false };
}

export function cancelStroke(state: ViewState): ViewState {
  return { ...state, drawing: false, pending: [] };
}

export function nextFrame(state: ViewState, direction: 1 | -1): ViewState {
  if (state.frames.length === 0) return state;
  const ids = state.frames.map((f) => f.frame_id);
  const idx = ids.indexOf(state.activeFrame);
  const n = ids.length;
  return { ...state, activeFrame: ids[(idx + direction + n) % n] };
}

export function showToast(state: ViewState, message: string): ViewState {
  return { ...state, toast: message };
}

// ---------------------------------------------------------------------------
// Store: state + caches + server actions
// ---------------------------------------------------------------------------

export class Store {
  state: ViewState = initialState();
  private contourCache = new Map<number, Contours>();
  private imageSeen = new Set<number>();
  private listeners: Array<(s: ViewState) => void> = [];

  constructor(private api: ApiClient) {}

  subscribe(fn: (s: ViewState) => void): void {
    this.listeners.push(fn);
  }

  private commit(next: ViewState): void {
    this.state = next;
    for (const fn of this.listeners) fn(next);
  }

  dispatch(fn: (s: ViewState) => ViewState): void {
    this.commit(fn(this.state));
  }

  /** Create a session or re-attach to an existing one. */
  async attach(caseId: string, engine: string, sessionId?: string): Promise<void> {
    const sid = sessionId ?? (await this.api.createSession(caseId, engine)).session_id;
    const frames = await this.api.frames(sid);
    const metrics = await this.api.metrics(sid);
    const history: HistoryRow[] = metrics.history.map((m, t) => ({
      t,
      frameId: -1, // unknown for re-attached sessions; scribble layers resume ahead
      path: [],
      metrics: m,
    }));
    this.contourCache.clear();
    this.imageSeen.clear();
    this.commit({
      ...initialState(),
      sessionId: sid,
      caseId,
      engine,
      frames,
      activeFrame: frames[0]?.frame_id ?? 0,
      history,
    });
  }

  /** Contours for a frame, cached within the current iteration. */
  async contours(frameId: number): Promise<Contours> {
    const hit = this.contourCache.get(frameId);
    if (hit) return hit;
    const body = await this.api.contours(this.state.sessionId!, frameId);
    this.contourCache.set(frameId, body);
    return body;
  }

  /** Image URLs are immutable per case; remember which were requested so
   * revisits reuse the browser cache. */
  imageUrl(frameId: number): string {
    this.imageSeen.add(frameId);
    return this.api.imageUrl(this.state.sessionId!, frameId);
  }

  imageRequested(frameId: number): boolean {
    return this.imageSeen.has(frameId);
  }

  async submitPending(): Promise<void> {
    const s = this.state;
    if (!submittable(s) || s.sessionId === null) return;
    this.commit({ ...s, inFlight: true });
    try {
      const resp = await this.api.submitEdit(
        s.sessionId,
        s.activeFrame,
        toWirePath(s.pending),
      );
      for (const f of resp.changed_frames) this.contourCache.delete(f);
      const row: HistoryRow = {
        t: resp.t,
        frameId: s.activeFrame,
        path: s.pending,
        metrics: resp.metrics,
      };
      this.commit({
        ...this.state,
        inFlight: false,
        pending: [],
        history: [...this.state.history, row],
      });
    } catch (err) {
      const message = err instanceof ApiFailure ? `${err.code}: ${err.message}` : String(err);
      this.commit({ ...this.state, inFlight: false, toast: message });
    }
  }

  async undo(): Promise<void> {
    const s = this.state;
    if (s.inFlight || s.sessionId === null || s.history.length === 0) return;
    this.commit({ ...s, inFlight: true });
    try {
      const resp = await this.api.undo(s.sessionId);
      for (const f of resp.changed_frames) this.contourCache.delete(f);
      this.commit({
        ...this.state,
        inFlight: false,
        history: this.state.history.slice(0, -1),
      });
    } catch (err) {
      const message = err instanceof ApiFailure ? `${err.code}: ${err.message}` : String(err);
      this.commit({ ...this.state, inFlight: false, toast: message });
    }
  }
}
