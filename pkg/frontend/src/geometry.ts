/**
 * Pixel <-> normalized coordinate conversion and canvas-space box math.
 *
 * The wire format stores normalized center/size; the editor works in
 * top-left pixel space. Normalized output is rounded to six decimals to
 * match the label-file precision, so a round trip through the editor never
 * drifts beyond 5e-7 per field.
 */

import type { WireBox } from "./api";

export interface PixelBox {
  classId: number;
  x: number; // top-left
  y: number;
  w: number;
  h: number;
}

export function round6(value: number): number {
  return Math.round(value * 1e6) / 1e6;
}

export function toPixels(box: WireBox, width: number, height: number): PixelBox {
  return {
    classId: box.class_id,
    x: (box.cx - box.w / 2) * width,
    y: (box.cy - box.h / 2) * height,
    w: box.w * width,
    h: box.h * height,
  };
}

export function toNormalized(box: PixelBox, width: number, height: number): WireBox {
  return {
    class_id: box.classId,
    cx: round6((box.x + box.w / 2) / width),
    cy: round6((box.y + box.h / 2) / height),
    w: round6(box.w / width),
    h: round6(box.h / height),
  };
}

/** Keep a box fully on the canvas and at least one pixel in size. */
export function clampPixelBox(box: PixelBox, width: number, height: number): PixelBox {
  const w = Math.min(Math.max(box.w, 1), width);
  const h = Math.min(Math.max(box.h, 1), height);
  const x = Math.min(Math.max(box.x, 0), width - w);
  const y = Math.min(Math.max(box.y, 0), height - h);
  return { classId: box.classId, x, y, w, h };
}

export type Handle = "nw" | "ne" | "sw" | "se";

export const HANDLE_RADIUS = 6;

export function handlePositions(box: PixelBox): Record<Handle, [number, number]> {
  return {
    nw: [box.x, box.y],
    ne: [box.x + box.w, box.y],
    sw: [box.x, box.y + box.h],
    se: [box.x + box.w, box.y + box.h],
  };
}

export function hitHandle(box: PixelBox, px: number, py: number): Handle | null {
  const handles = handlePositions(box);
  for (const name of Object.keys(handles) as Handle[]) {
    const [hx, hy] = handles[name];
    if (Math.abs(px - hx) <= HANDLE_RADIUS && Math.abs(py - hy) <= HANDLE_RADIUS) {
      return name;
    }
  }
  return null;
}

export function insideBox(box: PixelBox, px: number, py: number): boolean {
  return px >= box.x && px <= box.x + box.w && py >= box.y && py <= box.y + box.h;
}

/** Topmost (last drawn) box under the cursor, or null. */
export function hitBox(boxes: PixelBox[], px: number, py: number): number | null {
  for (let i = boxes.length - 1; i >= 0; i--) {
    if (insideBox(boxes[i], px, py)) {
      return i;
    }
  }
  return null;
}

/** Resize by dragging one corner handle; the opposite corner stays put. */
export function resizeByHandle(box: PixelBox, handle: Handle, dx: number, dy: number): PixelBox {
  let { x, y, w, h } = box;
  if (handle === "nw" || handle === "sw") {
    x += dx;
    w -= dx;
  } else {
    w += dx;
  }
  if (handle === "nw" || handle === "ne") {
    y += dy;
    h -= dy;
  } else {
    h += dy;
  }
  if (w < 1) {
    x = Math.min(x, x + w - 1);
    w = 1;
  }
  if (h < 1) {
    y = Math.min(y, y + h - 1);
    h = 1;
  }
  return { classId: box.classId, x, y, w, h };
}
