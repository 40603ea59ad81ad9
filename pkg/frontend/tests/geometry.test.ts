import { describe, expect, it } from "vitest";

import type { WireBox } from "../src/api";
import {
  clampPixelBox,
  hitBox,
  hitHandle,
  resizeByHandle,
  round6,
  toNormalized,
  toPixels,
} from "../src/geometry";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("pixel/normalized round trip", () => {
  it("normalize(denormalize(b)) matches to 1e-6 for random dims and boxes", () => {
    const rand = mulberry32(42);
    for (let trial = 0; trial < 500; trial++) {
      const width = 16 + Math.floor(rand() * 4000);
      const height = 16 + Math.floor(rand() * 4000);
      const w = round6(0.01 + rand() * 0.9);
      const h = round6(0.01 + rand() * 0.9);
      const box: WireBox = {
        class_id: Math.floor(rand() * 3),
        cx: round6(w / 2 + rand() * (1 - w)),
        cy: round6(h / 2 + rand() * (1 - h)),
        w,
        h,
      };
      const back = toNormalized(toPixels(box, width, height), width, height);
      expect(Math.abs(back.cx - box.cx)).toBeLessThanOrEqual(1e-6);
      expect(Math.abs(back.cy - box.cy)).toBeLessThanOrEqual(1e-6);
      expect(Math.abs(back.w - box.w)).toBeLessThanOrEqual(1e-6);
      expect(Math.abs(back.h - box.h)).toBeLessThanOrEqual(1e-6);
      expect(back.class_id).toBe(box.class_id);
    }
  });

  it("scales a centered box to the canvas center", () => {
    const pixel = toPixels({ class_id: 0, cx: 0.5, cy: 0.5, w: 0.25, h: 0.25 }, 640, 640);
    expect(pixel.x + pixel.w / 2).toBe(320);
    expect(pixel.y + pixel.h / 2).toBe(320);
  });
});

describe("clamping", () => {
  it("keeps boxes on the canvas", () => {
    const clamped = clampPixelBox({ classId: 0, x: -20, y: 610, w: 50, h: 50 }, 640, 640);
    expect(clamped.x).toBe(0);
    expect(clamped.y).toBe(590);
    expect(clamped.w).toBe(50);
  });

  it("never produces sub-pixel boxes", () => {
    const clamped = clampPixelBox({ classId: 0, x: 10, y: 10, w: 0.1, h: 0.1 }, 100, 100);
    expect(clamped.w).toBeGreaterThanOrEqual(1);
    expect(clamped.h).toBeGreaterThanOrEqual(1);
  });
});

describe("hit testing", () => {
  const box = { classId: 0, x: 100, y: 100, w: 50, h: 40 };

  it("finds the topmost box under the cursor", () => {
    const other = { classId: 1, x: 120, y: 110, w: 50, h: 40 };
    expect(hitBox([box, other], 125, 115)).toBe(1);
    expect(hitBox([box, other], 101, 101)).toBe(0);
    expect(hitBox([box, other], 5, 5)).toBeNull();
  });

  it("detects corner handles within their radius", () => {
    expect(hitHandle(box, 100, 100)).toBe("nw");
    expect(hitHandle(box, 150, 140)).toBe("se");
    expect(hitHandle(box, 125, 120)).toBeNull();
  });
});

describe("resize", () => {
  it("keeps the opposite corner fixed", () => {
    const box = { classId: 0, x: 100, y: 100, w: 50, h: 40 };
    const grown = resizeByHandle(box, "se", 10, 5);
    expect([grown.x, grown.y]).toEqual([100, 100]);
    expect([grown.w, grown.h]).toEqual([60, 45]);
    const shrunk = resizeByHandle(box, "nw", 10, 5);
    expect([shrunk.x + shrunk.w, shrunk.y + shrunk.h]).toEqual([150, 140]);
  });
});
