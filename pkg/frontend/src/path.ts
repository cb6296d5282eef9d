import type { Point } from "./types";

export const MIN_GAP_PX = 1.0;
export const MIN_SUBMIT_POINTS = 2;

/** Append a raw pointer sample, keeping consecutive kept points at least
 * MIN_GAP_PX apart; order is preserved and the path never grows faster
 * than the event stream. */
export function appendDecimated(path: Point[], sample: Point): Point[] {
  if (path.length === 0) return [sample];
  const last = path[path.length - 1];
  const d = Math.hypot(sample.r - last.r, sample.c - last.c);
  if (d < MIN_GAP_PX) return path;
  return [...path, sample];
}

export function decimate(samples: Point[]): Point[] {
  let path: Point[] = [];
  for (const s of samples) path = appendDecimated(path, s);
  return path;
}

export function canSubmit(path: Point[]): boolean {
  return path.length >= MIN_SUBMIT_POINTS;
}

export function toWirePath(path: Point[]): [number, number][] {
  return path.map((p) => [p.r, p.c]);
}
