import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchparts.errors import EmptyShapeError, EmptySketchError
from sketchparts.render import (
    ORTHO_HALF_WIDTH,
    AugmentParams,
    Camera,
    Sketch,
    apply_augment,
    augment,
    draw_augment_params,
    extract_outline,
    load_depth,
    normalize_sketch,
    render_depth,
    render_outline,
    render_partial,
    render_shaded,
    save_depth,
    sdf_normals,
    standard_views,
)
from sketchparts.shapes import PartPrimitive

CAM = Camera(azimuth=0.4, elevation=0.35, distance=3.0)


def sphere(r=0.5, center=(0, 0, 0)):
    return PartPrimitive("ellipsoid", center, (r, r, r), 0.0)


# -- depth --------------------------------------------------------------------


def test_depth_center_ray_hits_sphere():
    cam = Camera(azimuth=0.0, elevation=0.0, distance=3.0)
    depth = render_depth([sphere(0.5)], cam, res=65)
    assert depth[32, 32] == pytest.approx(2.5, abs=1e-3)


def test_depth_miss_is_inf():
    cam = Camera(azimuth=0.0, elevation=0.0, distance=3.0)
    depth = render_depth([sphere(0.2)], cam, res=65)
    assert np.isinf(depth[0, 0])
    assert np.isinf(depth[64, 64])


def ray_box_depth(origin, direction, center, half):
    lo = np.asarray(center) - np.asarray(half)
    hi = np.asarray(center) + np.asarray(half)
    with np.errstate(divide="ignore"):
        t1 = (lo - origin) / direction
        t2 = (hi - origin) / direction
    t_near = np.minimum(t1, t2).max()
    t_far = np.maximum(t1, t2).min()
    if t_near > t_far or t_far < 0:
        return np.inf, 0.0
    return t_near, t_far - t_near


def test_depth_matches_analytic_box_intersection():
    box = PartPrimitive("box", (0.1, -0.05, 0.2), (0.5, 0.3, 0.4), 0.0)
    res = 64
    depth = render_depth([box], CAM, res=res)
    eye, right, up, forward = CAM.frame()
    step = 2.0 / res
    for i in range(res):
        for j in range(res):
            u = -1.0 + step * (j + 0.5)
            v = 1.0 - step * (i + 0.5)
            origin = eye + u * ORTHO_HALF_WIDTH * right + v * ORTHO_HALF_WIDTH * up
            t, pen = ray_box_depth(origin, forward, box.center, box.half_extents)
            if np.isinf(t):
                assert np.isinf(depth[i, j]), (i, j)
            elif pen > 1e-3:  # skip true grazing rays
                assert depth[i, j] == pytest.approx(t, abs=1e-3), (i, j)


def test_depth_requires_camera_outside():
    with pytest.raises(ValueError):
        render_depth([sphere(0.9)], Camera(0, 0, 0.5), res=16)
    with pytest.raises(EmptyShapeError):
        render_depth([], CAM, res=16)


def test_depth_round_trip_file(tmp_path):
    depth = render_depth([sphere(0.5)], CAM, res=32)
    path = tmp_path / "d.bin"
    save_depth(path, depth)
    back = load_depth(path)
    assert back.shape == depth.shape
    assert np.array_equal(np.isinf(back), np.isinf(depth))
    finite = np.isfinite(depth)
    assert np.allclose(back[finite], depth[finite], atol=1e-5)


def test_standard_views_rig():
    views = standard_views()
    assert len(views) == 6
    assert views[0].azimuth == 0.0
    assert views[3].azimuth == pytest.approx(math.pi)
    assert all(v.elevation == pytest.approx(math.radians(20)) for v in views)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(0, 0, 3.0, projection="isometric")
    with pytest.raises(ValueError):
        Camera(0, 0, 3.0, projection="perspective", fov=math.radians(5))
    with pytest.raises(ValueError):
        Camera(0, 0, -1.0)


# -- outline ------------------------------------------------------------------


def test_outline_constant_depth_is_blank():
    sketch = extract_outline(np.full((256, 256), 2.0))
    assert np.all(sketch.pixels == 1.0)


def test_outline_all_background_is_blank():
    sketch = extract_outline(np.full((256, 256), np.inf))
    assert np.all(sketch.pixels == 1.0)


def test_outline_disk_ring_radius():
    yy, xx = np.mgrid[0:256, 0:256]
    rr = np.hypot(yy - 128.0, xx - 128.0)
    depth = np.where(rr <= 60.0, 2.0, np.inf)
    sketch = extract_outline(depth)
    ys, xs = np.nonzero(sketch.ink_mask)
    assert len(ys) > 50
    radii = np.hypot(ys - 128.0, xs - 128.0)
    assert abs(radii.mean() - 60.0) < 2.0


def test_outline_step_edge_one_pixel_wide():
    depth = np.where(np.arange(256)[None, :] < 128, 2.0, 3.0) * np.ones((256, 256))
    sketch = extract_outline(depth)
    ink = sketch.ink_mask
    for row in range(20, 236):
        assert ink[row].sum() == 1, f"row {row} has {ink[row].sum()} edge pixels"


def test_outline_threshold_validation():
    depth = np.full((64, 64), 1.0)
    with pytest.raises(ValueError):
        extract_outline(depth, canny_low=0.3, canny_high=0.2)
    with pytest.raises(ValueError):
        extract_outline(depth, canny_low=0.0, canny_high=0.2)
    with pytest.raises(ValueError):
        extract_outline(np.zeros((32, 64)))


# -- normalization ---------------------------------------------------------------


def test_normalize_blank_raises():
    with pytest.raises(EmptySketchError):
        normalize_sketch(np.ones((128, 128)))


def test_normalize_centers_corner_blob():
    canvas = np.ones((512, 512))
    canvas[8:72, 8:72] = 0.0  # 64x64 blob in the corner
    out = normalize_sketch(canvas)
    ys, xs = np.nonzero(out.ink_mask)
    cy, cx = ys.mean(), xs.mean()
    assert abs(cy - 127.5) < 3
    assert abs(cx - 127.5) < 3


def test_normalize_margin_fraction():
    canvas = np.ones((512, 512))
    canvas[100:400, 50:450] = 0.0
    out = normalize_sketch(canvas)
    ys, xs = np.nonzero(out.ink_mask)
    # 4% margin: ink confined to the 236-wide content box at offset 10
    assert ys.min() >= 9 and xs.min() >= 9
    assert ys.max() <= 246 and xs.max() <= 246


def test_normalize_canonical_passes_through():
    canvas = np.ones((256, 256))
    canvas[10:246, 10:246] = 0.3
    out = normalize_sketch(canvas)
    assert np.array_equal(out.pixels, canvas)


def test_normalize_idempotent_on_outline():
    sketch = render_outline([sphere(0.6), PartPrimitive("box", (0, -0.5, 0), (0.5, 0.2, 0.5), 0.3)], CAM)
    again = normalize_sketch(sketch.pixels)
    assert np.max(np.abs(again.pixels - sketch.pixels)) <= 1.0 / 255.0


@given(
    st.integers(min_value=0, max_value=10_000),
    st.integers(min_value=80, max_value=300),
    st.integers(min_value=1, max_value=4),
)
@settings(max_examples=25, deadline=None)
def test_normalize_idempotent_random_blobs(seed, size, blobs):
    rng = np.random.default_rng(seed)
    canvas = np.ones((size, size))
    for _ in range(blobs):
        r0, c0 = rng.integers(0, size - 8, size=2)
        h, w = rng.integers(2, 40, size=2)
        canvas[r0 : min(r0 + h, size), c0 : min(c0 + w, size)] = 0.0
    once = normalize_sketch(canvas)
    twice = normalize_sketch(once.pixels)
    assert np.max(np.abs(twice.pixels - once.pixels)) <= 1.0 / 255.0


# -- partial renders ----------------------------------------------------------------


def chair_parts():
    seat = PartPrimitive("box", (0, 0.0, 0), (0.45, 0.06, 0.45), 0.0)
    back = PartPrimitive("box", (0, 0.45, -0.4), (0.45, 0.4, 0.05), 0.0)
    legs = [
        PartPrimitive("box", (sx * 0.38, -0.4, sz * 0.38), (0.06, 0.35, 0.06), 0.0)
        for sx in (-1, 1)
        for sz in (-1, 1)
    ]
    return [seat, back] + legs


def test_partial_all_flags_equals_full():
    parts = chair_parts()
    full = render_outline(parts, CAM)
    partial = render_partial(parts, np.ones(len(parts)), CAM)
    assert np.array_equal(full.pixels, partial.pixels)


def test_partial_no_flags_rejected():
    parts = chair_parts()
    with pytest.raises(EmptyShapeError):
        render_partial(parts, np.zeros(len(parts)), CAM)


def test_partial_ink_confined_to_projected_box():
    parts = chair_parts()
    flagged = 1  # the back rest
    presence = np.zeros(len(parts))
    presence[flagged] = 1.0
    out = render_partial(parts, presence, CAM)

    # projection oracle: part corners -> raw pixel frame -> full-crop reframe
    part = parts[flagged]
    h = np.array(part.half_extents)
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * h
    cy, sy_ = math.cos(part.yaw), math.sin(part.yaw)
    rot = np.array([[cy, 0, sy_], [0, 1, 0], [-sy_, 0, cy]])
    world = corners @ rot.T + np.array(part.center)

    eye, right, up, forward = CAM.frame()
    res = 256
    u = (world - eye) @ right / ORTHO_HALF_WIDTH
    v = (world - eye) @ up / ORTHO_HALF_WIDTH
    cols = (u + 1.0) * res / 2.0 - 0.5
    rows = (1.0 - v) * res / 2.0 - 0.5

    from sketchparts.render import _ink_square_box

    full_raw = extract_outline(render_depth(parts, CAM, res))
    top, left, side = _ink_square_box(full_raw.pixels)
    rows = (rows - top) / side * 236 + 10
    cols = (cols - left) / side * 236 + 10

    ys, xs = np.nonzero(out.ink_mask)
    pad = 3
    assert ys.min() >= math.floor(rows.min()) - pad
    assert ys.max() <= math.ceil(rows.max()) + pad
    assert xs.min() >= math.floor(cols.min()) - pad
    assert xs.max() <= math.ceil(cols.max()) + pad


# -- augmentation ---------------------------------------------------------------------


def test_augment_identity_params():
    sketch = render_outline(chair_parts(), CAM)
    out = apply_augment(sketch, AugmentParams.identity())
    assert np.array_equal(out.pixels, normalize_sketch(sketch.pixels).pixels)


def test_augment_double_flip_is_identity():
    sketch = render_outline(chair_parts(), CAM)
    flip = AugmentParams(True, AugmentParams.identity().corners, 0, 0.0)
    once = apply_augment(sketch, flip)
    twice = apply_augment(once, flip)
    assert np.max(np.abs(twice.pixels - sketch.pixels)) <= 2.0 / 255.0


def test_augment_dilation_grows_ink():
    sketch = render_outline(chair_parts(), CAM)
    grown = apply_augment(sketch, AugmentParams(False, AugmentParams.identity().corners, 1, 0.0))
    assert grown.ink_mask.sum() >= sketch.ink_mask.sum()


def test_augment_deterministic_and_valid():
    sketch = render_outline(chair_parts(), CAM)
    for seed in range(6):
        a = augment(sketch, seed)
        b = augment(sketch, seed)
        assert np.array_equal(a.pixels, b.pixels)
        assert a.pixels.shape == (256, 256)
        assert a.pixels.min() >= 0.0 and a.pixels.max() <= 1.0
        assert a.ink_mask.any()


def test_augment_jitter_bounded():
    for seed in range(30):
        p = draw_augment_params(seed)
        base = AugmentParams.identity().corners
        assert np.max(np.abs(p.corners - base)) <= 0.08 * 256 + 1e-9
        assert abs(p.morph_radius) <= 2
        assert 0.0 <= p.dropout <= 0.2


# -- shaded renders ----------------------------------------------------------------------


def test_shaded_sphere_brightest_at_center():
    cam = Camera(azimuth=0.3, elevation=0.2, distance=3.0)
    img = render_shaded([sphere(0.6)], cam, res=65)
    hit = img < 1.0
    assert hit.any()
    # lambert peaks where the normal faces the camera: the silhouette center
    iy, ix = np.unravel_index(np.argmin(np.where(hit, -img, -np.inf).ravel() * -1), img.shape)
    bright = np.unravel_index(np.argmax(np.where(hit, img, -np.inf)), img.shape)
    assert abs(bright[0] - 32) <= 1 and abs(bright[1] - 32) <= 1


def test_shaded_normals_unit_length():
    p = sphere(0.5, center=(0.1, 0.0, -0.1))
    theta = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    pts = np.stack(
        [0.1 + 0.5 * np.cos(theta), 0.5 * np.sin(theta), -0.1 * np.ones_like(theta)], axis=1
    )
    grads = np.zeros_like(pts)
    eps = 1e-5
    from sketchparts.shapes import sdf

    for axis in range(3):
        off = np.zeros(3)
        off[axis] = eps
        grads[:, axis] = (sdf([p], pts + off) - sdf([p], pts - off)) / (2 * eps)
    norms = np.linalg.norm(grads, axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-3)
    unit = sdf_normals([p], pts)
    assert np.allclose(np.linalg.norm(unit, axis=1), 1.0, atol=1e-9)


def test_shaded_empty_view_is_background():
    cam = Camera(azimuth=0.0, elevation=0.0, distance=3.0, projection="perspective", fov=math.radians(11))
    tiny = PartPrimitive("box", (0.9, 0.9, 0.9), (0.05, 0.05, 0.05), 0.0)
    img = render_shaded([tiny], cam, res=64)
    assert np.all(img == 1.0)


# -- sketch io ------------------------------------------------------------------------------


def test_sketch_png_round_trip(tmp_path):
    sketch = render_outline(chair_parts(), CAM)
    path = tmp_path / "s.png"
    sketch.save_png(path)
    back = Sketch.load_png(path)
    assert np.max(np.abs(back.pixels - sketch.pixels)) <= 1.0 / 255.0


def test_sketch_shape_validation():
    with pytest.raises(ValueError):
        Sketch(np.ones((100, 100)))
