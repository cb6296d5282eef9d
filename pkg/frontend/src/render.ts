import { COLORS } from "./state";
import type { Point } from "./types";

export interface FrameView {
  rows: number;
  cols: number;
  scale: number;
}

export function fitScale(rows: number, cols: number, maxPx = 640): number {
  return Math.max(1, Math.floor(maxPx / Math.max(rows, cols)));
}

function tracePolyline(
  ctx: CanvasRenderingContext2D,
  pts: [number, number][] | Point[],
  scale: number,
): void {
  ctx.beginPath();
  let first = true;
  for (const p of pts) {
    const r = Array.isArray(p) ? p[0] : p.r;
    const c = Array.isArray(p) ? p[1] : p.c;
    const x = (c + 0.5) * scale;
    const y = (r + 0.5) * scale;
    if (first) {
      ctx.moveTo(x, y);
      first = false;
    } else {
      ctx.lineTo(x, y);
    }
  }
  ctx.stroke();
}

export function drawContour(
  ctx: CanvasRenderingContext2D,
  pts: [number, number][],
  color: string,
  scale: number,
  width = 2,
): void {
  if (pts.length === 0) return;
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.lineJoin = "round";
  tracePolyline(ctx, pts, scale);
  ctx.restore();
}

export function drawScribble(
  ctx: CanvasRenderingContext2D,
  pts: Point[],
  scale: number,
  live: boolean,
): void {
  if (pts.length === 0) return;
  ctx.save();
  ctx.strokeStyle = COLORS.scribble;
  ctx.lineWidth = live ? 3 : 2;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  if (live) ctx.setLineDash([6, 3]);
  if (pts.length === 1) {
    ctx.fillStyle = COLORS.scribble;
    ctx.fillRect((pts[0].c + 0.25) * scale, (pts[0].r + 0.25) * scale, scale / 2, scale / 2);
  } else {
    tracePolyline(ctx, pts, scale);
  }
  ctx.restore();
}
