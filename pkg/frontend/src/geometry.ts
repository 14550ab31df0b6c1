// Camera math shared by the viewer and lasso picking. Mirrors the server's
// conventions: y-up world, right-handed basis, orthographic half-width 2.2,
// screen row 0 at the top.

export type Vec3 = [number, number, number];

export interface Camera {
  azimuth: number;
  elevation: number;
  distance: number;
  projection: "orthographic" | "perspective";
  fov: number; // radians, perspective only
}

export const ORTHO_HALF_WIDTH = 2.2;

export function defaultCamera(): Camera {
  return { azimuth: 0.6, elevation: 0.35, distance: 3.0, projection: "orthographic", fov: (40 * Math.PI) / 180 };
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n === 0 ? [0, 0, 0] : [a[0] / n, a[1] / n, a[2] / n];
}

export interface Frame {
  eye: Vec3;
  right: Vec3;
  up: Vec3;
  forward: Vec3;
}

export function cameraFrame(cam: Camera): Frame {
  const ca = Math.cos(cam.azimuth);
  const sa = Math.sin(cam.azimuth);
  const ce = Math.cos(cam.elevation);
  const se = Math.sin(cam.elevation);
  const eye: Vec3 = [cam.distance * ce * sa, cam.distance * se, cam.distance * ce * ca];
  const forward = normalize([-eye[0], -eye[1], -eye[2]]);
  let right = cross(forward, [0, 1, 0]);
  const nr = norm(right);
  right = nr < 1e-9 ? [1, 0, 0] : [right[0] / nr, right[1] / nr, right[2] / nr];
  const up = cross(right, forward);
  return { eye, right, up, forward };
}

export interface Projected {
  x: number; // pixels, 0 at the left edge
  y: number; // pixels, 0 at the top edge
  depth: number; // distance along the view direction, for sorting
  visible: boolean; // in front of the camera plane
}

export function projectPoint(p: Vec3, cam: Camera, frame: Frame, width: number, height: number): Projected {
  const rel = sub(p, frame.eye);
  const xc = dot(rel, frame.right);
  const yc = dot(rel, frame.up);
  const zc = dot(rel, frame.forward);
  let u: number;
  let v: number;
  if (cam.projection === "orthographic") {
    u = xc / ORTHO_HALF_WIDTH;
    v = yc / ORTHO_HALF_WIDTH;
  } else {
    const half = Math.tan(cam.fov / 2);
    u = xc / (half * Math.max(zc, 1e-9));
    v = yc / (half * Math.max(zc, 1e-9));
  }
  return {
    x: ((u + 1) / 2) * width,
    y: ((1 - v) / 2) * height,
    depth: zc,
    visible: zc > 0,
  };
}
