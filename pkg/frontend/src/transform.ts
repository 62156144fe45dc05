// View transform between image pixels and canvas (screen) pixels.
// screen = image * scale + offset; zooming keeps the cursor anchored.

export type ViewTransform = { scale: number; ox: number; oy: number };

export function identityTransform(): ViewTransform {
  return { scale: 1, ox: 0, oy: 0 };
}

export function fitImage(canvasW: number, canvasH: number, imgW: number, imgH: number): ViewTransform {
  const scale = Math.min(canvasW / imgW, canvasH / imgH);
  return {
    scale,
    ox: (canvasW - imgW * scale) / 2,
    oy: (canvasH - imgH * scale) / 2,
  };
}

export function imageToScreen(t: ViewTransform, x: number, y: number): [number, number] {
  return [x * t.scale + t.ox, y * t.scale + t.oy];
}

export function screenToImage(t: ViewTransform, sx: number, sy: number): [number, number] {
  return [(sx - t.ox) / t.scale, (sy - t.oy) / t.scale];
}

export function zoomAt(t: ViewTransform, sx: number, sy: number, factor: number): ViewTransform {
  const scale = Math.min(Math.max(t.scale * factor, 0.25), 64);
  const ratio = scale / t.scale;
  return {
    scale,
    ox: sx - (sx - t.ox) * ratio,
    oy: sy - (sy - t.oy) * ratio,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { scale: t.scale, ox: t.ox + dx, oy: t.oy + dy };
}
