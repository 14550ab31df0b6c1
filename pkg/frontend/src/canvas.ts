// Sketch canvas model: polyline strokes over an optional outline background,
// rasterized to a grayscale buffer (ink black on white). Rasterization is pure
// so the same pixels drive the on-screen preview, the PNG export, and tests.

export interface Stroke {
  points: Array<[number, number]>;
  width: number;
}

export const EXPORT_SIZE = 512;

export class CanvasState {
  strokes: Stroke[] = [];
  background: { pixels: Float64Array; size: number } | null = null;

  constructor(public size: number = EXPORT_SIZE) {}

  beginStroke(x: number, y: number, width: number): void {
    this.strokes.push({ points: [[x, y]], width });
  }

  extendStroke(x: number, y: number): void {
    const s = this.strokes[this.strokes.length - 1];
    if (s) s.points.push([x, y]);
  }

  undoStroke(): boolean {
    return this.strokes.pop() !== undefined;
  }

  clear(): void {
    this.strokes = [];
    this.background = null;
  }

  setBackground(pixels: Float64Array, size: number): void {
    this.background = { pixels, size };
  }

  hasInk(): boolean {
    return this.strokes.some((s) => s.points.length > 0) || this.background !== null;
  }

  // White 1.0 background, ink approaches 0.0; coverage antialiases edges.
  rasterize(): Float64Array {
    const n = this.size;
    const ink = new Float64Array(n * n); // 0 = blank, 1 = full ink
    if (this.background) this.drawBackground(ink);
    for (const s of this.strokes) this.drawStroke(ink, s);
    const out = new Float64Array(n * n);
    for (let i = 0; i < out.length; i++) out[i] = 1 - Math.min(1, ink[i]);
    return out;
  }

  private drawBackground(ink: Float64Array): void {
    const bg = this.background!;
    const scale = bg.size / this.size;
    for (let y = 0; y < this.size; y++) {
      const sy = Math.min(bg.size - 1, (y + 0.5) * scale - 0.5);
      const y0 = Math.max(0, Math.floor(sy));
      const y1 = Math.min(bg.size - 1, y0 + 1);
      const fy = sy - y0;
      for (let x = 0; x < this.size; x++) {
        const sx = Math.min(bg.size - 1, (x + 0.5) * scale - 0.5);
        const x0 = Math.max(0, Math.floor(sx));
        const x1 = Math.min(bg.size - 1, x0 + 1);
        const fx = sx - x0;
        const v =
          bg.pixels[y0 * bg.size + x0] * (1 - fx) * (1 - fy) +
          bg.pixels[y0 * bg.size + x1] * fx * (1 - fy) +
          bg.pixels[y1 * bg.size + x0] * (1 - fx) * fy +
          bg.pixels[y1 * bg.size + x1] * fx * fy;
        const cov = 1 - v; // background stores white=1
        if (cov > 0) {
          const i = y * this.size + x;
          ink[i] = Math.max(ink[i], cov);
        }
      }
    }
  }

  private drawStroke(ink: Float64Array, s: Stroke): void {
    const r = s.width / 2;
    const pad = Math.ceil(r + 1);
    const segs = s.points.length === 1 ? [[s.points[0], s.points[0]]] : pairs(s.points);
    for (const [a, b] of segs) {
      const x0 = Math.max(0, Math.floor(Math.min(a[0], b[0])) - pad);
      const x1 = Math.min(this.size - 1, Math.ceil(Math.max(a[0], b[0])) + pad);
      const y0 = Math.max(0, Math.floor(Math.min(a[1], b[1])) - pad);
      const y1 = Math.min(this.size - 1, Math.ceil(Math.max(a[1], b[1])) + pad);
      for (let y = y0; y <= y1; y++) {
        for (let x = x0; x <= x1; x++) {
          const d = segmentDistance(x + 0.5, y + 0.5, a[0], a[1], b[0], b[1]);
          const cov = Math.min(1, Math.max(0, r - d + 0.5));
          if (cov > 0) {
            const i = y * this.size + x;
            if (cov > ink[i]) ink[i] = cov;
          }
        }
      }
    }
  }
}

function pairs(pts: Array<[number, number]>): Array<[[number, number], [number, number]]> {
  const out: Array<[[number, number], [number, number]]> = [];
  for (let i = 0; i + 1 < pts.length; i++) out.push([pts[i], pts[i + 1]]);
  return out;
}

export function segmentDistance(px: number, py: number, ax: number, ay: number, bx: number, by: number): number {
  const dx = bx - ax;
  const dy = by - ay;
  const len2 = dx * dx + dy * dy;
  let t = 0;
  if (len2 > 0) t = Math.min(1, Math.max(0, ((px - ax) * dx + (py - ay) * dy) / len2));
  return Math.hypot(px - (ax + t * dx), py - (ay + t * dy));
}
