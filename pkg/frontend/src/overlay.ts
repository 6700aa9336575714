/** Canvas drawing helpers and a smoothed FPS meter for the demo loop. */

import type { Detection } from "./pipeline.js";

export const CLASS_COLORS = ["#2ecc40", "#ff4136", "#0074d9", "#ffdc00"];

export interface OverlayStyle {
  lineWidth?: number;
  font?: string;
}

export function drawDetections(
  ctx: CanvasRenderingContext2D,
  detections: Detection[],
  classNames: string[],
  style: OverlayStyle = {},
): void {
  const lineWidth = style.lineWidth ?? 2;
  const font = style.font ?? "14px sans-serif";
  ctx.save();
  ctx.lineWidth = lineWidth;
  ctx.font = font;
  ctx.textBaseline = "top";
  for (const d of detections) {
    const color = CLASS_COLORS[d.classId % CLASS_COLORS.length];
    const [x1, y1, x2, y2] = d.box;
    ctx.strokeStyle = color;
    ctx.strokeRect(x1, y1, x2 - x1, y2 - y1);
    const name = d.classId < classNames.length ? classNames[d.classId] : `#${d.classId}`;
    const label = `${name} ${(d.confidence * 100).toFixed(0)}%`;
    const metrics = ctx.measureText(label);
    ctx.fillStyle = color;
    ctx.fillRect(x1, Math.max(0, y1 - 18), metrics.width + 8, 18);
    ctx.fillStyle = "#ffffff";
    ctx.fillText(label, x1 + 4, Math.max(0, y1 - 16));
  }
  ctx.restore();
}

/** Exponential-moving-average frame timer. */
export class FpsMeter {
  private ema: number | null = null;
  private last: number | null = null;

  constructor(private readonly alpha = 0.1) {}

  /** Record a frame boundary at `now` (ms); returns smoothed FPS. */
  tick(now: number): number {
    if (this.last !== null) {
      const dt = now - this.last;
      if (dt > 0) {
        this.ema = this.ema === null ? dt : this.alpha * dt + (1 - this.alpha) * this.ema;
      }
    }
    this.last = now;
    return this.fps;
  }

  get fps(): number {
    return this.ema === null || this.ema <= 0 ? 0 : 1000 / this.ema;
  }

  reset(): void {
    this.ema = null;
    this.last = null;
  }
}
