export interface Point {
  r: number;
  c: number;
}

export interface FrameInfo {
  frame_id: number;
  angle_rad: number;
  rows: number;
  cols: number;
}

export interface Contours {
  cas: [number, number][];
  current: [number, number][];
  initial: [number, number][];
}

export interface Metrics {
  overall_p95_mm: number;
  overall_mean_mm: number;
  near_p95_mm: number | null;
  near_mean_mm: number | null;
  far_p95_mm: number | null;
  far_mean_mm: number | null;
  n_points_near: number | null;
  n_points_far: number | null;
  n_points: number;
}

export interface EditResponse {
  t: number;
  metrics: Metrics;
  changed_frames: number[];
}

export interface UndoResponse {
  t: number;
  metrics: Metrics | null;
  changed_frames: number[];
}

export interface ApiError {
  code: string;
  message: string;
}

export interface HistoryRow {
  t: number;
  frameId: number;
  path: Point[];
  metrics: Metrics;
}
