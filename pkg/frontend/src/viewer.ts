// Minimal software mesh viewer: painter's algorithm over projected triangles
// with flat shading, stable per-part colors, and an orange selection highlight.
// Meshes at desk scale stay small enough that a canvas 2D pass is smooth.

import type { MeshJson } from "./api.js";
import { Camera, Vec3, cameraFrame, cross, dot, normalize, projectPoint, sub } from "./geometry.js";

export const PART_PALETTE = [
  "#4e79a7", "#f28e2b", "#59a14f", "#b07aa1",
  "#76b7b2", "#edc948", "#9c755f", "#bab0ac",
  "#e15759", "#86bcb6", "#d37295", "#a0cbe8",
];

export const HIGHLIGHT_COLOR = "#ff8800";

export function partColor(partId: number): string {
  return PART_PALETTE[((partId % PART_PALETTE.length) + PART_PALETTE.length) % PART_PALETTE.length];
}

// The exact face set the renderer highlights; kept separate so the invariant
// "highlight = faces whose part is selected" is directly testable.
export function highlightFaces(mesh: MeshJson, selected: Set<number>): Set<number> {
  const out = new Set<number>();
  for (let f = 0; f < mesh.face_part.length; f++) {
    if (selected.has(mesh.face_part[f])) out.add(f);
  }
  return out;
}

export class ViewerState {
  mesh: MeshJson | null = null;
  selected = new Set<number>();
  camera: Camera;

  constructor(camera: Camera) {
    this.camera = camera;
  }

  setMesh(mesh: MeshJson | null): void {
    this.mesh = mesh;
    this.selected.clear();
  }

  orbit(dAzimuth: number, dElevation: number): void {
    this.camera.azimuth += dAzimuth;
    const cap = Math.PI / 2 - 0.05;
    this.camera.elevation = Math.min(cap, Math.max(-cap, this.camera.elevation + dElevation));
  }
}

interface DrawTri {
  xs: [number, number, number];
  ys: [number, number, number];
  depth: number;
  fill: string;
}

export function buildDrawList(state: ViewerState, width: number, height: number): DrawTri[] {
  const mesh = state.mesh;
  if (!mesh) return [];
  const cam = state.camera;
  const frame = cameraFrame(cam);
  const highlighted = highlightFaces(mesh, state.selected);
  const light = normalize([0.4, 0.8, 0.45]);
  const tris: DrawTri[] = [];
  for (let f = 0; f < mesh.faces.length; f++) {
    const [i, j, k] = mesh.faces[f];
    const a = mesh.vertices[i] as Vec3;
    const b = mesh.vertices[j] as Vec3;
    const c = mesh.vertices[k] as Vec3;
    const centroid: Vec3 = [(a[0] + b[0] + c[0]) / 3, (a[1] + b[1] + c[1]) / 3, (a[2] + b[2] + c[2]) / 3];
    const n = normalize(cross(sub(b, a), sub(c, a)));
    if (dot(n, sub(frame.eye, centroid)) <= 0) continue; // back face
    const pa = projectPoint(a, cam, frame, width, height);
    const pb = projectPoint(b, cam, frame, width, height);
    const pc = projectPoint(c, cam, frame, width, height);
    if (!pa.visible || !pb.visible || !pc.visible) continue;
    const base = highlighted.has(f) ? HIGHLIGHT_COLOR : partColor(mesh.face_part[f]);
    const shade = 0.55 + 0.45 * Math.max(0, dot(n, light));
    tris.push({
      xs: [pa.x, pb.x, pc.x],
      ys: [pa.y, pb.y, pc.y],
      depth: (pa.depth + pb.depth + pc.depth) / 3,
      fill: shadeColor(base, shade),
    });
  }
  tris.sort((p, q) => q.depth - p.depth); // far first
  return tris;
}

export function renderMesh(ctx: CanvasRenderingContext2D, state: ViewerState, width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  for (const t of buildDrawList(state, width, height)) {
    ctx.beginPath();
    ctx.moveTo(t.xs[0], t.ys[0]);
    ctx.lineTo(t.xs[1], t.ys[1]);
    ctx.lineTo(t.xs[2], t.ys[2]);
    ctx.closePath();
    ctx.fillStyle = t.fill;
    ctx.fill();
  }
}

function shadeColor(hex: string, factor: number): string {
  const r = Math.round(parseInt(hex.slice(1, 3), 16) * factor);
  const g = Math.round(parseInt(hex.slice(3, 5), 16) * factor);
  const b = Math.round(parseInt(hex.slice(5, 7), 16) * factor);
  return `rgb(${Math.min(255, r)},${Math.min(255, g)},${Math.min(255, b)})`;
}
