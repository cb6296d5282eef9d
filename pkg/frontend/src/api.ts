import type { Contours, EditResponse, FrameInfo, Metrics, UndoResponse } from "./types";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiFailure extends Error {
  code: string;
  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = `http_${resp.status}`;
    let message = resp.statusText;
    try {
      const body = (await resp.json()) as { code?: string; message?: string };
      if (body.code) code = body.code;
      if (body.message) message = body.message;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiFailure(code, message);
  }
  return (await resp.json()) as T;
}

/** Thin typed client over the session API; the fetch implementation is
 * injectable so tests can run without a server. */
export class ApiClient {
  private fetchImpl: FetchLike;
  base: string;

  constructor(base = "", fetchImpl?: FetchLike) {
    this.base = base;
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  createSession(caseId: string, engine: string): Promise<{ session_id: string }> {
    return this.post(`/api/sessions`, { case: caseId, engine });
  }

  frames(sid: string): Promise<FrameInfo[]> {
    return this.get(`/api/sessions/${sid}/frames`);
  }

  contours(sid: string, frameId: number): Promise<Contours> {
    return this.get(`/api/sessions/${sid}/frames/${frameId}/contours`);
  }

  imageUrl(sid: string, frameId: number): string {
    return `${this.base}/api/sessions/${sid}/frames/${frameId}/image.png`;
  }

  submitEdit(sid: string, frameId: number, path: [number, number][]): Promise<EditResponse> {
    return this.post(`/api/sessions/${sid}/edits`, { frame_id: frameId, path });
  }

  undo(sid: string): Promise<UndoResponse> {
    return this.post(`/api/sessions/${sid}/undo`, null);
  }

  metrics(sid: string): Promise<{ t: number; history: Metrics[] }> {
    return this.get(`/api/sessions/${sid}/metrics`);
  }

  exportMaskUrl(sid: string): string {
    return `${this.base}/api/sessions/${sid}/mask.bin`;
  }

  private async get<T>(path: string): Promise<T> {
    return asJson<T>(await this.fetchImpl(this.base + path));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    return asJson<T>(
      await this.fetchImpl(this.base + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: body === null ? undefined : JSON.stringify(body),
      }),
    );
  }
}
