import { beforeEach, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api";
import {
  Store,
  Z_ORDER,
  cancelStroke,
  endStroke,
  extendStroke,
  frameScribbles,
  initialState,
  iteration,
  nextFrame,
  startStroke,
  submittable,
} from "../src/state";
import type { Contours, Metrics } from "../src/types";

const METRICS: Metrics = {
  overall_p95_mm: 1.25,
  overall_mean_mm: 0.4,
  near_p95_mm: 1.5,
  near_mean_mm: 0.6,
  far_p95_mm: 0.2,
  far_mean_mm: 0.05,
  n_points_near: 100,
  n_points_far: 300,
  n_points: 400,
};

interface Call {
  url: string;
  method: string;
}

/** Scripted backend: three frames, contours per frame, canned edit replies. */
function fakeServer() {
  const calls: Call[] = [];
  let failNextEdit: { status: number; code: string } | null = null;
  const contours: Contours = { cas: [[1, 2]], current: [[3, 4]], initial: [[5, 6]] };

  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({ url, method });
    const json = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    if (url.endsWith("/api/sessions") && method === "POST") {
      return json({ session_id: "s1" });
    }
    if (url.endsWith("/frames")) {
      return json(
        [0, 1, 2].map((f) => ({ frame_id: f, angle_rad: f, rows: 32, cols: 32 })),
      );
    }
    if (url.endsWith("/metrics")) {
      return json({ t: -1, history: [] });
    }
    if (url.includes("/contours")) {
      return json(contours);
    }
    if (url.endsWith("/edits")) {
      if (failNextEdit) {
        const { status, code } = failNextEdit;
        failNextEdit = null;
        return json({ code, message: "scripted failure" }, status);
      }
      return json({ t: 0, metrics: METRICS, changed_frames: [0, 1] });
    }
    if (url.endsWith("/undo")) {
      return json({ t: -1, metrics: null, changed_frames: [0, 1] });
    }
    throw new Error(`unscripted call: ${method} ${url}`);
  };

  return {
    calls,
    armEditFailure(status: number, code: string) {
      failNextEdit = { status, code };
    },
    client: new ApiClient("", fetchImpl),
  };
}

function strokedStore(store: Store) {
  store.dispatch((s) => startStroke(s, { r: 5, c: 5 }));
  store.dispatch((s) => extendStroke(s, { r: 8, c: 5 }));
  store.dispatch((s) => extendStroke(s, { r: 11, c: 5 }));
  store.dispatch(endStroke);
  return store;
}

describe("overlay contract", () => {
  it("z-order is fixed bottom to top", () => {
    expect(Z_ORDER).toEqual(["image", "initial", "current", "cas", "scribble"]);
  });
});

describe("stroke state", () => {
  it("escape clears the pending path", () => {
    let s = startStroke(initialState(), { r: 1, c: 1 });
    s = extendStroke(s, { r: 3, c: 1 });
    expect(s.pending).toHaveLength(2);
    s = cancelStroke(s);
    expect(s.pending).toHaveLength(0);
    expect(s.drawing).toBe(false);
  });

  it("single click is not submittable", () => {
    let s = startStroke(initialState(), { r: 1, c: 1 });
    s = endStroke(s);
    expect(submittable(s)).toBe(false);
  });
});

describe("frame navigator", () => {
  const base = {
    ...initialState(),
    frames: [0, 1, 2].map((f) => ({ frame_id: f, angle_rad: f, rows: 8, cols: 8 })),
    activeFrame: 2,
  };

  it("wraps forward from the last frame", () => {
    expect(nextFrame(base, 1).activeFrame).toBe(0);
  });

  it("wraps backward from the first frame", () => {
    expect(nextFrame({ ...base, activeFrame: 0 }, -1).activeFrame).toBe(2);
  });
});

describe("store actions", () => {
  let server: ReturnType<typeof fakeServer>;
  let store: Store;

  beforeEach(async () => {
    server = fakeServer();
    store = new Store(server.client);
    await store.attach("case_0000", "geometric");
  });

  it("attach loads frames and empty history", () => {
    expect(store.state.sessionId).toBe("s1");
    expect(store.state.frames).toHaveLength(3);
    expect(iteration(store.state)).toBe(-1);
  });

  it("successful edit appends history and clears the scribble", async () => {
    strokedStore(store);
    expect(submittable(store.state)).toBe(true);
    await store.submitPending();
    expect(store.state.history).toHaveLength(1);
    expect(store.state.pending).toHaveLength(0);
    expect(store.state.history[0].metrics.overall_p95_mm).toBe(1.25);
    expect(frameScribbles(store.state, 0)).toHaveLength(1);
  });

  it("conflict leaves state unchanged apart from the toast", async () => {
    strokedStore(store);
    const pendingBefore = store.state.pending;
    server.armEditFailure(409, "conflict");
    await store.submitPending();
    expect(store.state.history).toHaveLength(0);
    expect(store.state.pending).toBe(pendingBefore);
    expect(store.state.toast).toContain("conflict");
  });

  it("undo shortens the history by one", async () => {
    strokedStore(store);
    await store.submitPending();
    expect(store.state.history).toHaveLength(1);
    await store.undo();
    expect(store.state.history).toHaveLength(0);
  });

  it("caches contours per frame within an iteration", async () => {
    await store.contours(2);
    await store.contours(2);
    const hits = server.calls.filter((c) => c.url.includes("/frames/2/contours"));
    expect(hits).toHaveLength(1);
  });

  it("refetches only changed frames after an edit", async () => {
    await store.contours(0);
    await store.contours(2);
    strokedStore(store);
    await store.submitPending(); // changed_frames: [0, 1]
    await store.contours(0); // invalidated: refetch
    await store.contours(2); // untouched: cache hit
    const f0 = server.calls.filter((c) => c.url.includes("/frames/0/contours"));
    const f2 = server.calls.filter((c) => c.url.includes("/frames/2/contours"));
    expect(f0).toHaveLength(2);
    expect(f2).toHaveLength(1);
  });

  it("submit is disabled while a request is in flight", async () => {
    strokedStore(store);
    const p = store.submitPending();
    expect(store.state.inFlight).toBe(true);
    expect(submittable(store.state)).toBe(false);
    await p;
    expect(store.state.inFlight).toBe(false);
  });

  it("re-attach hydrates history from the server metrics", async () => {
    strokedStore(store);
    await store.submitPending();
    // a fresh store attaching to the same session sees the same iteration
    const server2 = fakeServer();
    const store2 = new Store(server2.client);
    const metricsCall = server2.calls; // attach fetches /metrics
    await store2.attach("case_0000", "geometric", "s1");
    expect(store2.state.sessionId).toBe("s1");
    expect(metricsCall.some((c) => c.url.endsWith("/metrics"))).toBe(true);
    expect(iteration(store2.state)).toBe(-1); // scripted server has no edits
  });
});
