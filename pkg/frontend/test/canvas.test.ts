import { describe, expect, it } from "vitest";
import { CanvasState, segmentDistance } from "../src/canvas.js";
import { decodeGrayPngBase64, encodeGrayPngBase64 } from "../src/png_node.js";

describe("segmentDistance", () => {
  it("measures perpendicular and endpoint distances", () => {
    expect(segmentDistance(5, 3, 0, 0, 10, 0)).toBeCloseTo(3, 12);
    expect(segmentDistance(-4, 0, 0, 0, 10, 0)).toBeCloseTo(4, 12);
    expect(segmentDistance(2, 2, 1, 1, 1, 1)).toBeCloseTo(Math.SQRT2, 12); // degenerate segment
  });
});

describe("CanvasState", () => {
  it("starts blank", () => {
    const c = new CanvasState(64);
    expect(c.hasInk()).toBe(false);
    const px = c.rasterize();
    expect(px.every((v) => v === 1)).toBe(true);
  });

  it("rasterizes a dot and a line", () => {
    const c = new CanvasState(64);
    c.beginStroke(32, 32, 3);
    let px = c.rasterize();
    expect(px[32 * 64 + 32]).toBeLessThan(0.5);
    expect(px[5 * 64 + 5]).toBe(1);

    c.beginStroke(10, 48, 3);
    c.extendStroke(54, 48);
    px = c.rasterize();
    let inkRun = 0;
    for (let x = 10; x <= 54; x++) if (px[48 * 64 + x] < 0.5) inkRun++;
    expect(inkRun).toBeGreaterThan(40);
  });

  it("undoes strokes one at a time and clears fully", () => {
    const c = new CanvasState(64);
    c.beginStroke(10, 10, 3);
    c.beginStroke(50, 50, 3);
    expect(c.undoStroke()).toBe(true);
    let px = c.rasterize();
    expect(px[10 * 64 + 10]).toBeLessThan(0.5);
    expect(px[50 * 64 + 50]).toBe(1);
    c.clear();
    expect(c.hasInk()).toBe(false);
    expect(c.undoStroke()).toBe(false);
    px = c.rasterize();
    expect(px.every((v) => v === 1)).toBe(true);
  });

  it("upscales a background and composites strokes over it", () => {
    const c = new CanvasState(64);
    const bg = new Float64Array(32 * 32).fill(1);
    for (let y = 8; y < 16; y++) for (let x = 8; x < 16; x++) bg[y * 32 + x] = 0;
    c.setBackground(bg, 32);
    expect(c.hasInk()).toBe(true);
    const px = c.rasterize();
    expect(px[24 * 64 + 24]).toBeLessThan(0.5); // inside the upscaled square
    expect(px[4 * 64 + 4]).toBeGreaterThan(0.9);
    c.beginStroke(4, 4, 3);
    const over = c.rasterize();
    expect(over[4 * 64 + 4]).toBeLessThan(0.5);
    expect(over[24 * 64 + 24]).toBeLessThan(0.5); // background still there
  });

  it("round-trips pixels through grayscale PNG", () => {
    const c = new CanvasState(64);
    c.beginStroke(12, 20, 4);
    c.extendStroke(50, 44);
    const px = c.rasterize();
    const b64 = encodeGrayPngBase64(px, 64);
    const back = decodeGrayPngBase64(b64);
    expect(back.width).toBe(64);
    expect(back.height).toBe(64);
    let maxErr = 0;
    for (let i = 0; i < px.length; i++) maxErr = Math.max(maxErr, Math.abs(back.pixels[i] - px[i]));
    expect(maxErr).toBeLessThanOrEqual(1 / 255 + 1e-12); // 8-bit quantization only
  });
});
