"""Sketch synthesis: sphere-traced depth, depth-edge outlines, normalization,
augmentation, and shaded renders for view statistics.

Depth maps are float64 arrays with +inf at misses; the persisted binary form
stores misses as 2x the far plane (see save_depth). Sketches are 256x256
grayscale in [0,1] with 0 = ink.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import EmptySketchError, EmptyShapeError
from .shapes import circumradius, sdf

SKETCH_SIZE = 256
# sketch content box: 4% margin on each side of the 256 canvas
_MARGIN = round(0.04 * SKETCH_SIZE)  # 10 px
_CONTENT = SKETCH_SIZE - 2 * _MARGIN  # 236 px

# orthographic image half-width; covers the whole [-1.25,1.25]^3 domain corner-on
ORTHO_HALF_WIDTH = 2.2

HIT_EPS = 1e-4
MAX_STEPS = 256


@dataclass(frozen=True)
class Camera:
    azimuth: float
    elevation: float
    distance: float
    projection: str = "orthographic"  # or "perspective"
    fov: float = math.radians(40.0)

    def __post_init__(self):
        if self.projection not in ("orthographic", "perspective"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.distance <= 0:
            raise ValueError("distance must be positive")
        if self.projection == "perspective" and not math.radians(10) < self.fov < math.radians(90):
            raise ValueError("perspective fov must lie in (10, 90) degrees")

    def frame(self):
        """Right-handed camera basis (right, up, forward), y-up world."""
        ca, sa = math.cos(self.azimuth), math.sin(self.azimuth)
        ce, se = math.cos(self.elevation), math.sin(self.elevation)
        eye = self.distance * np.array([ce * sa, se, ce * ca])
        forward = -eye / np.linalg.norm(eye)
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, world_up)
        nr = np.linalg.norm(right)
        if nr < 1e-9:  # looking straight up/down
            right = np.array([1.0, 0.0, 0.0])
        else:
            right = right / nr
        up = np.cross(right, forward)
        return eye, right, up, forward


def standard_views(n: int = 6, distance: float = 3.0, elevation: float = math.radians(20)):
    """The fixed training rig: n azimuths evenly spaced, one elevation."""
    return [
        Camera(azimuth=2 * math.pi * i / n, elevation=elevation, distance=distance)
        for i in range(n)
    ]


@dataclass
class Sketch:
    pixels: np.ndarray  # (256, 256) in [0,1], 0 = ink

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (SKETCH_SIZE, SKETCH_SIZE):
            raise ValueError(f"sketch must be {SKETCH_SIZE}x{SKETCH_SIZE}, got {px.shape}")
        self.pixels = np.clip(px, 0.0, 1.0)

    @property
    def ink_mask(self) -> np.ndarray:
        return self.pixels < 0.5

    def save_png(self, path):
        arr = np.round(self.pixels * 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(path, format="PNG")

    @staticmethod
    def load_png(path) -> "Sketch":
        img = Image.open(path).convert("L")
        return Sketch(np.asarray(img, dtype=np.float64) / 255.0)


# -- depth rendering ---------------------------------------------------------------


def _pixel_grid(res: int):
    """Pixel-center coordinates in [-1, 1], row 0 at the top."""
    step = 2.0 / res
    u = -1.0 + step * (np.arange(res) + 0.5)
    v = 1.0 - step * (np.arange(res) + 0.5)
    uu, vv = np.meshgrid(u, v)
    return uu, vv


def render_depth(parts: list, camera: Camera, res: int = SKETCH_SIZE) -> np.ndarray:
    """Sphere-trace the part union. Returns (res, res) distances along each ray,
    +inf where the ray misses. Rays step by the union signed distance, which is
    1-Lipschitz, so no surface can be crossed."""
    if not parts:
        raise EmptyShapeError("need at least one part")
    if camera.distance <= circumradius(parts):
        raise ValueError("camera distance must exceed the shape circumradius")
    eye, right, up, forward = camera.frame()
    uu, vv = _pixel_grid(res)
    n = res * res
    if camera.projection == "orthographic":
        origins = (
            eye[None, :]
            + uu.reshape(-1, 1) * ORTHO_HALF_WIDTH * right[None, :]
            + vv.reshape(-1, 1) * ORTHO_HALF_WIDTH * up[None, :]
        )
        dirs = np.broadcast_to(forward, (n, 3)).copy()
    else:
        half = math.tan(camera.fov / 2.0)
        dirs = (
            forward[None, :]
            + uu.reshape(-1, 1) * half * right[None, :]
            + vv.reshape(-1, 1) * half * up[None, :]
        )
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(eye, (n, 3)).copy()

    far = camera.distance + 2.5
    t = np.zeros(n)
    depth = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(MAX_STEPS):
        if not active.any():
            break
        pts = origins[active] + t[active, None] * dirs[active]
        d = sdf(parts, pts)
        hit = np.abs(d) < HIT_EPS
        idx = np.flatnonzero(active)
        depth[idx[hit]] = t[idx[hit]]
        t[idx] += d
        overshot = t[idx] > far
        active[idx[hit]] = False
        active[idx[overshot]] = False
    return depth.reshape(res, res)


def save_depth(path, depth: np.ndarray):
    """Binary form: magic, u32 height, u32 width, f32 far, float32 data with
    misses stored as 2*far (far = deepest hit + 2.5, or 5.0 for empty maps)."""
    depth = np.asarray(depth, dtype=np.float64)
    finite = depth[np.isfinite(depth)]
    far = float(finite.max() + 2.5) if finite.size else 5.0
    data = np.where(np.isfinite(depth), depth, 2.0 * far).astype("<f4")
    with open(path, "wb") as f:
        f.write(b"DEPTHMAP")
        f.write(struct.pack("<IIf", depth.shape[0], depth.shape[1], far))
        f.write(data.tobytes())


def load_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(8) != b"DEPTHMAP":
            raise ValueError("not a depth file")
        h, w, far = struct.unpack("<IIf", f.read(12))
        data = np.frombuffer(f.read(h * w * 4), dtype="<f4").reshape(h, w).astype(np.float64)
    out = data.copy()
    out[data >= 1.99 * far] = np.inf
    return out


# -- outline extraction -------------------------------------------------------------


def _canny_edges(depth: np.ndarray, blur_sigma: float, low: float, high: float) -> np.ndarray:
    """Boolean edge mask from a depth map. `low`/`high` are fractions of the
    maximum gradient magnitude."""
    finite = np.isfinite(depth)
    if not finite.any():
        return np.zeros(depth.shape, dtype=bool)
    # replace background one unit past the deepest hit so the silhouette keeps
    # a step even at the farthest visible surface
    far_value = depth[finite].max() + 1.0
    field = np.where(finite, depth, far_value)
    smooth = ndimage.gaussian_filter(field, sigma=blur_sigma, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(depth.shape, dtype=bool)

    # non-maximum suppression in 4 quantized directions
    angle = np.arctan2(gy, gx)  # (-pi, pi]
    octant = np.round(angle / (math.pi / 4.0)).astype(int) % 4
    padded = np.pad(mag, 1, mode="constant")
    c = padded[1:-1, 1:-1]
    neighbors = {
        0: (padded[1:-1, 2:], padded[1:-1, :-2]),  # horizontal gradient
        1: (padded[2:, 2:], padded[:-2, :-2]),  # diagonal
        2: (padded[2:, 1:-1], padded[:-2, 1:-1]),  # vertical gradient
        3: (padded[2:, :-2], padded[:-2, 2:]),  # anti-diagonal
    }
    keep = np.zeros(depth.shape, dtype=bool)
    for k, (a, b) in neighbors.items():
        sel = octant == k
        # strict on one side so a two-pixel tie across a step keeps one pixel
        keep[sel] = (c[sel] > a[sel]) & (c[sel] >= b[sel])
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high * peak
    weak = nms >= low * peak
    labels, n_labels = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n_labels == 0:
        return np.zeros(depth.shape, dtype=bool)
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels > 0]
    return np.isin(labels, strong_labels)


def extract_outline(
    depth: np.ndarray, blur_sigma: float = 1.5, canny_low: float = 0.1, canny_high: float = 0.25
) -> Sketch:
    """Depth edges as ink on white. Maps of any square size are accepted; the
    edge mask is nearest-resized onto the 256 canvas if needed."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.shape[0] != depth.shape[1]:
        raise ValueError("depth map must be square")
    if not 0 < canny_low < canny_high:
        raise ValueError("thresholds must satisfy 0 < low < high")
    edges = _canny_edges(depth, blur_sigma, canny_low, canny_high)
    if depth.shape[0] != SKETCH_SIZE:
        img = Image.fromarray(edges.astype(np.uint8) * 255, mode="L")
        img = img.resize((SKETCH_SIZE, SKETCH_SIZE), resample=Image.NEAREST)
        edges = np.asarray(img) > 127
    return Sketch(np.where(edges, 0.0, 1.0))


# -- normalization -------------------------------------------------------------------


def _ink_square_box(img: np.ndarray):
    """Square region (top, left, side) covering the ink tightly, centered."""
    ink = img < 0.5
    if not ink.any():
        raise EmptySketchError("image contains no ink")
    rows = np.flatnonzero(ink.any(axis=1))
    cols = np.flatnonzero(ink.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    h, w = r1 - r0 + 1, c1 - c0 + 1
    side = max(h, w)
    top = r0 - (side - h) // 2
    left = c0 - (side - w) // 2
    return top, left, side


def normalize_sketch(image: np.ndarray) -> Sketch:
    """Center the ink: tight box, squared preserving aspect, 4% margin, bilinear
    resize onto the 256 canvas. Images already in canonical framing pass through
    unchanged, which makes the operation idempotent."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D grayscale image")
    img = np.clip(img, 0.0, 1.0)
    top, left, side = _ink_square_box(img)
    if (
        img.shape == (SKETCH_SIZE, SKETCH_SIZE)
        and abs(top - _MARGIN) <= 4
        and abs(left - _MARGIN) <= 4
        and abs(side - _CONTENT) <= 8
    ):
        return Sketch(img.copy())

    # scale the tight rectangle so its long side fills the content box, then
    # center at output resolution; equivalent to squaring with even padding but
    # without a sub-pixel source offset that an upscale would magnify
    ink = img < 0.5
    rows = np.flatnonzero(ink.any(axis=1))
    cols = np.flatnonzero(ink.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    h, w = r1 - r0 + 1, c1 - c0 + 1
    long_side = max(h, w)
    out_h = max(1, round(_CONTENT * h / long_side))
    out_w = max(1, round(_CONTENT * w / long_side))
    pil = Image.fromarray(np.round(img[r0 : r1 + 1, c0 : c1 + 1] * 255).astype(np.uint8), "L")
    pil = pil.resize((out_w, out_h), resample=Image.BILINEAR)
    canvas = np.ones((SKETCH_SIZE, SKETCH_SIZE), dtype=np.float64)
    oy = _MARGIN + (_CONTENT - out_h) // 2
    ox = _MARGIN + (_CONTENT - out_w) // 2
    canvas[oy : oy + out_h, ox : ox + out_w] = np.asarray(pil, dtype=np.float64) / 255.0
    return Sketch(canvas)


def _reframe(img: np.ndarray, top: int, left: int, side: int) -> Sketch:
    """Resize the square region (top,left,side) into the content box."""
    h, w = img.shape
    crop = np.ones((side, side), dtype=np.float64)
    r0, r1 = max(top, 0), min(top + side, h)
    c0, c1 = max(left, 0), min(left + side, w)
    if r0 < r1 and c0 < c1:
        crop[r0 - top : r1 - top, c0 - left : c1 - left] = img[r0:r1, c0:c1]
    pil = Image.fromarray(np.round(crop * 255).astype(np.uint8), mode="L")
    pil = pil.resize((_CONTENT, _CONTENT), resample=Image.BILINEAR)
    canvas = np.ones((SKETCH_SIZE, SKETCH_SIZE), dtype=np.float64)
    canvas[_MARGIN : _MARGIN + _CONTENT, _MARGIN : _MARGIN + _CONTENT] = (
        np.asarray(pil, dtype=np.float64) / 255.0
    )
    return Sketch(canvas)


# -- full and partial outlines ---------------------------------------------------------


def render_outline(
    parts: list,
    camera: Camera,
    blur_sigma: float = 1.5,
    canny_low: float = 0.1,
    canny_high: float = 0.25,
    res: int = SKETCH_SIZE,
) -> Sketch:
    """Full-shape outline: depth, edges, then canonical normalization."""
    depth = render_depth(parts, camera, res)
    raw = extract_outline(depth, blur_sigma, canny_low, canny_high)
    return normalize_sketch(raw.pixels)


def render_partial(
    parts: list,
    presence: np.ndarray,
    camera: Camera,
    blur_sigma: float = 1.5,
    canny_low: float = 0.1,
    canny_high: float = 0.25,
    res: int = SKETCH_SIZE,
) -> Sketch:
    """Outline of the flagged parts only, framed by the FULL shape's crop box so
    partial sketches stay aligned with their full render."""
    presence = np.asarray(presence)
    if len(presence) != len(parts):
        raise ValueError("presence flags must align with parts")
    kept = [p for p, flag in zip(parts, presence) if flag >= 0.5]
    if not kept:
        raise EmptyShapeError("render_partial needs at least one flagged part")

    full_depth = render_depth(parts, camera, res)
    full_raw = extract_outline(full_depth, blur_sigma, canny_low, canny_high)
    if len(kept) == len(parts):
        # same field: go through the exact full-outline normalization path
        return normalize_sketch(full_raw.pixels)
    box = _ink_square_box(full_raw.pixels)
    sub_depth = render_depth(kept, camera, res)
    sub_raw = extract_outline(sub_depth, blur_sigma, canny_low, canny_high)
    return _reframe(sub_raw.pixels, *box)


# -- augmentation -----------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    corners: np.ndarray  # (4, 2) jittered output corners, pixel units
    morph_radius: int  # 0 none, >0 dilate, <0 erode
    dropout: float  # fraction of ink runs to remove

    @staticmethod
    def identity() -> "AugmentParams":
        return AugmentParams(False, _base_corners(), 0, 0.0)


def _base_corners() -> np.ndarray:
    s = float(SKETCH_SIZE)
    return np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]])


def draw_augment_params(seed: int, max_jitter: float = 0.08) -> AugmentParams:
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < 0.5)
    jitter = rng.uniform(-max_jitter, max_jitter, size=(4, 2)) * SKETCH_SIZE
    corners = _base_corners() + jitter
    radius = int(rng.integers(0, 3)) * (1 if rng.random() < 0.5 else -1)
    dropout = float(rng.uniform(0.0, 0.2)) if rng.random() < 0.5 else 0.0
    return AugmentParams(flip, corners, radius, dropout)


def _perspective_coeffs(src: np.ndarray, dst: np.ndarray) -> list:
    # PIL wants the homography mapping output coords back to input coords
    a = []
    b = []
    for (sx, sy), (dx, dy) in zip(src, dst):
        a.append([dx, dy, 1, 0, 0, 0, -sx * dx, -sx * dy])
        a.append([0, 0, 0, dx, dy, 1, -sy * dx, -sy * dy])
        b.extend([sx, sy])
    return list(np.linalg.solve(np.array(a), np.array(b)))


def apply_augment(s: Sketch, params: AugmentParams) -> Sketch:
    px = s.pixels
    if params.flip:
        px = np.fliplr(px)
    if not np.allclose(params.corners, _base_corners()):
        coeffs = _perspective_coeffs(_base_corners(), params.corners)
        img = Image.fromarray(np.round(px * 255).astype(np.uint8), mode="L")
        img = img.transform(
            (SKETCH_SIZE, SKETCH_SIZE),
            Image.PERSPECTIVE,
            coeffs,
            resample=Image.BILINEAR,
            fillcolor=255,
        )
        px = np.asarray(img, dtype=np.float64) / 255.0
    if params.morph_radius != 0:
        r = abs(params.morph_radius)
        footprint = _disk(r)
        ink = px < 0.5
        if params.morph_radius > 0:
            ink = ndimage.binary_dilation(ink, structure=footprint)
        else:
            ink = ndimage.binary_erosion(ink, structure=footprint)
        px = np.where(ink, 0.0, 1.0)
    if params.dropout > 0:
        px = _drop_runs(px, params.dropout)
    try:
        return normalize_sketch(px)
    except EmptySketchError:
        # degenerate draw wiped all ink; fall back to the unaugmented sketch
        return normalize_sketch(s.pixels)


def _disk(r: int) -> np.ndarray:
    y, x = np.ogrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def _drop_runs(px: np.ndarray, fraction: float) -> np.ndarray:
    """Remove whole connected ink runs until ~fraction of ink pixels are gone."""
    ink = px < 0.5
    labels, n = ndimage.label(ink, structure=np.ones((3, 3), dtype=int))
    if n <= 1:
        return px
    sizes = ndimage.sum_labels(ink, labels, index=np.arange(1, n + 1))
    order = np.argsort(sizes)  # drop small runs first, keeps the sketch readable
    budget = fraction * ink.sum()
    out = px.copy()
    removed = 0.0
    for i in order:
        if removed + sizes[i] > budget:
            break
        out[labels == i + 1] = 1.0
        removed += sizes[i]
    return out


def augment(s: Sketch, seed: int) -> Sketch:
    """Random flip, perspective warp (corner jitter <= 8%), stroke morphology,
    and stroke-run dropout, then re-normalization."""
    return apply_augment(s, draw_augment_params(seed))


# -- shaded renders ------------------------------------------------------------------


def render_shaded(parts: list, camera: Camera, res: int = SKETCH_SIZE) -> np.ndarray:
    """Lambert-lit grayscale render, headlight rig, white background."""
    depth = render_depth(parts, camera, res)
    eye, right, up, forward = camera.frame()
    uu, vv = _pixel_grid(res)
    hit = np.isfinite(depth).reshape(-1)
    img = np.ones(res * res)
    if hit.any():
        if camera.projection == "orthographic":
            origins = (
                eye[None, :]
                + uu.reshape(-1, 1) * ORTHO_HALF_WIDTH * right[None, :]
                + vv.reshape(-1, 1) * ORTHO_HALF_WIDTH * up[None, :]
            )
            dirs = np.broadcast_to(forward, (res * res, 3))
        else:
            half = math.tan(camera.fov / 2.0)
            dirs = (
                forward[None, :]
                + uu.reshape(-1, 1) * half * right[None, :]
                + vv.reshape(-1, 1) * half * up[None, :]
            )
            dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            origins = np.broadcast_to(eye, (res * res, 3))
        pts = origins[hit] + depth.reshape(-1)[hit, None] * dirs[hit]
        normals = sdf_normals(parts, pts)
        light = -forward  # headlight
        lambert = np.clip(normals @ light, 0.0, 1.0)
        img[hit] = 0.15 + 0.8 * lambert
    return img.reshape(res, res)


def sdf_normals(parts: list, pts: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Unit normals from central differences of the union field."""
    grads = np.zeros_like(pts)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = eps
        grads[:, axis] = (sdf(parts, pts + offset) - sdf(parts, pts - offset)) / (2 * eps)
    norms = np.linalg.norm(grads, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return grads / norms
