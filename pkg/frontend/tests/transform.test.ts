import { describe, expect, it } from "vitest";
import {
  fitImage,
  imageToScreen,
  pan,
  screenToImage,
  zoomAt,
} from "../src/transform";

describe("view transform", () => {
  it("fits the image centered in the canvas", () => {
    const t = fitImage(640, 640, 64, 64);
    expect(t.scale).toBe(10);
    expect(t.ox).toBe(0);
    expect(t.oy).toBe(0);
    const wide = fitImage(640, 640, 128, 64);
    expect(wide.scale).toBe(5);
    expect(wide.oy).toBe((640 - 64 * 5) / 2);
  });

  it("round-trips screen and image coordinates", () => {
    const t = { scale: 3.7, ox: 12.5, oy: -4.25 };
    for (const [x, y] of [[0, 0], [10.25, 63.5], [31.125, 7.75]] as const) {
      const [sx, sy] = imageToScreen(t, x, y);
      const [bx, by] = screenToImage(t, sx, sy);
      expect(Math.abs(bx - x)).toBeLessThan(1e-9);
      expect(Math.abs(by - y)).toBeLessThan(1e-9);
    }
  });

  it("zoom preserves the click-to-pixel mapping within half a pixel", () => {
    // synthetic click test against a known transform: a fixed screen point
    // must map to (nearly) the same image pixel before and after zooming at it
    let t = fitImage(640, 640, 64, 64);
    const click: [number, number] = [321.5, 123.25];
    const before = screenToImage(t, ...click);
    t = zoomAt(t, click[0], click[1], 1.8);
    const after = screenToImage(t, ...click);
    expect(Math.abs(after[0] - before[0])).toBeLessThan(0.5 / t.scale);
    expect(Math.abs(after[1] - before[1])).toBeLessThan(0.5 / t.scale);

    // and a point away from the anchor still round-trips exactly
    const probe = screenToImage(t, 100, 200);
    const [sx, sy] = imageToScreen(t, probe[0], probe[1]);
    expect(Math.abs(sx - 100)).toBeLessThan(1e-9);
    expect(Math.abs(sy - 200)).toBeLessThan(1e-9);
  });

  it("pan shifts offsets only", () => {
    const t = pan({ scale: 2, ox: 5, oy: 6 }, 10, -3);
    expect(t).toEqual({ scale: 2, ox: 15, oy: 3 });
  });

  it("zoom clamps to sane bounds", () => {
    let t = fitImage(640, 640, 64, 64);
    for (let i = 0; i < 50; i++) t = zoomAt(t, 320, 320, 2);
    expect(t.scale).toBeLessThanOrEqual(64);
    for (let i = 0; i < 80; i++) t = zoomAt(t, 320, 320, 0.5);
    expect(t.scale).toBeGreaterThanOrEqual(0.25);
  });
});
