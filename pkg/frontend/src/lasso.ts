// Freehand lasso over the rendered mesh: faces whose projected centroids fall
// inside the screen polygon and face the camera contribute their part id, so
// picking any face of a part selects the whole part.

import type { MeshJson } from "./api.js";
import { Camera, Vec3, cameraFrame, cross, dot, projectPoint, sub } from "./geometry.js";

export interface LassoResult {
  parts: Set<number>;
  degenerate: boolean;
}

export function pointInPolygon(x: number, y: number, poly: Array<[number, number]>): boolean {
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const [xi, yi] = poly[i];
    const [xj, yj] = poly[j];
    if (yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

function polygonArea(poly: Array<[number, number]>): number {
  let a = 0;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    a += poly[j][0] * poly[i][1] - poly[i][0] * poly[j][1];
  }
  return Math.abs(a) / 2;
}

export function lassoPick(
  polygon: Array<[number, number]>,
  mesh: MeshJson,
  camera: Camera,
  width: number,
  height: number,
): LassoResult {
  if (polygon.length < 3 || polygonArea(polygon) < 1e-9) {
    return { parts: new Set(), degenerate: true };
  }
  const frame = cameraFrame(camera);
  const parts = new Set<number>();
  for (let f = 0; f < mesh.faces.length; f++) {
    const [i, j, k] = mesh.faces[f];
    const a = mesh.vertices[i] as Vec3;
    const b = mesh.vertices[j] as Vec3;
    const c = mesh.vertices[k] as Vec3;
    const centroid: Vec3 = [(a[0] + b[0] + c[0]) / 3, (a[1] + b[1] + c[1]) / 3, (a[2] + b[2] + c[2]) / 3];
    const normal = cross(sub(b, a), sub(c, a));
    // front-facing: the outward normal points back toward the eye
    if (dot(normal, sub(frame.eye, centroid)) <= 0) continue;
    const p = projectPoint(centroid, camera, frame, width, height);
    if (!p.visible) continue;
    if (pointInPolygon(p.x, p.y, polygon)) parts.add(mesh.face_part[f]);
  }
  return { parts, degenerate: false };
}
