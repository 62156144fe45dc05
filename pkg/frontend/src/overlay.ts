// Detection overlay rendering. Boxes arrive verbatim from the server's
// projection endpoint; this module only filters and draws them.

import type { OverlayBox, PromptItem } from "./api";
import type { ReviewState } from "./state";
import { classColor } from "./state";
import { imageToScreen, type ViewTransform } from "./transform";

export function visibleBoxes(boxes: OverlayBox[], review: ReviewState): OverlayBox[] {
  return boxes.filter(
    (b) => b.score >= review.scoreThreshold && !review.hiddenClasses.has(b.class),
  );
}

// The drawing surface subset we use; lets tests supply a recording stub.
export type Ctx2D = {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
};

export function drawDetections(ctx: Ctx2D, boxes: OverlayBox[], review: ReviewState, t: ViewTransform): void {
  ctx.lineWidth = 1.5;
  ctx.font = "11px sans-serif";
  for (const b of visibleBoxes(boxes, review)) {
    const [sx, sy] = imageToScreen(t, b.x - b.d / 2, b.y - b.d / 2);
    const side = b.d * t.scale;
    ctx.strokeStyle = classColor(b.class);
    ctx.strokeRect(sx, sy, side, side);
    ctx.fillStyle = classColor(b.class);
    ctx.fillText(b.score.toFixed(2), sx + 2, sy - 2);
  }
}

export function drawPrompts(ctx: Ctx2D, prompts: PromptItem[], tiltIndex: number, t: ViewTransform): void {
  ctx.lineWidth = 2;
  for (const p of prompts) {
    if (p.tilt_index !== tiltIndex) continue;
    const [sx, sy] = imageToScreen(t, p.x, p.y);
    const r = (p.d / 2) * t.scale;
    ctx.strokeStyle = classColor(p.class);
    ctx.beginPath();
    ctx.moveTo(sx - r, sy);
    ctx.lineTo(sx + r, sy);
    ctx.moveTo(sx, sy - r);
    ctx.lineTo(sx, sy + r);
    ctx.stroke();
    ctx.strokeRect(sx - r, sy - r, r * 2, r * 2);
  }
}
