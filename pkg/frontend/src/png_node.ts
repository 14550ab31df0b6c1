// Node-side PNG adapters used by the test suite; the browser path exports
// through an offscreen canvas instead.

import { PNG } from "pngjs";

export function encodeGrayPngBase64(pixels: Float64Array, size: number): string {
  const png = new PNG({ width: size, height: size });
  for (let i = 0; i < size * size; i++) {
    const v = Math.round(Math.min(1, Math.max(0, pixels[i])) * 255);
    png.data[4 * i] = v;
    png.data[4 * i + 1] = v;
    png.data[4 * i + 2] = v;
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png).toString("base64");
}

export function decodeGrayPngBase64(base64: string): { pixels: Float64Array; width: number; height: number } {
  const png = PNG.sync.read(Buffer.from(base64, "base64"));
  const pixels = new Float64Array(png.width * png.height);
  for (let i = 0; i < pixels.length; i++) pixels[i] = png.data[4 * i] / 255;
  return { pixels, width: png.width, height: png.height };
}
