import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchparts.errors import EmptyShapeError
from sketchparts.shapes import (
    LabeledMesh,
    PartPrimitive,
    PartSet,
    decode_part,
    decode_partset,
    encode_part,
    encode_parts,
    extract_mesh,
    mesh_from_json,
    mesh_to_json,
    mesh_to_obj,
    part_responsibility,
    sample_surface,
    sdf,
)

RNG = np.random.default_rng(11)


# -- independent reference distances (clamp-based, distinct from the library's
#    max/min formulation) -------------------------------------------------------


def ref_box_sdf(center, half, yaw, q):
    d = np.asarray(q, dtype=float) - np.asarray(center, dtype=float)
    cy, sy = math.cos(yaw), math.sin(yaw)
    local = np.array([cy * d[0] - sy * d[2], d[1], sy * d[0] + cy * d[2]])
    h = np.asarray(half, dtype=float)
    closest = np.clip(local, -h, h)
    if np.any(np.abs(local) > h):
        return float(np.linalg.norm(local - closest))
    return float(-np.min(h - np.abs(local)))


def ref_cylinder_sdf(center, half, yaw, q):
    d = np.asarray(q, dtype=float) - np.asarray(center, dtype=float)
    cy, sy = math.cos(yaw), math.sin(yaw)
    local = np.array([cy * d[0] - sy * d[2], d[1], sy * d[0] + cy * d[2]])
    rad = math.hypot(local[0], local[2])
    dr = rad - half[0]
    dz = abs(local[1]) - half[1]
    if dr <= 0 and dz <= 0:
        return float(max(dr, dz))
    return float(math.hypot(max(dr, 0.0), max(dz, 0.0)))


def ref_ellipsoid_sdf(center, half, yaw, q):
    d = np.asarray(q, dtype=float) - np.asarray(center, dtype=float)
    cy, sy = math.cos(yaw), math.sin(yaw)
    local = np.array([cy * d[0] - sy * d[2], d[1], sy * d[0] + cy * d[2]])
    k = float(np.linalg.norm(local / np.asarray(half, dtype=float)))
    return (k - 1.0) * float(min(half))


REF = {"box": ref_box_sdf, "cylinder": ref_cylinder_sdf, "ellipsoid": ref_ellipsoid_sdf}


def ref_sdf(parts, q):
    return min(REF[p.kind](p.center, p.half_extents, p.yaw, q) for p in parts)


def random_part(rng):
    kind = ["box", "cylinder", "ellipsoid"][rng.integers(3)]
    half = rng.uniform(0.05, 0.45, size=3)
    if kind == "cylinder":
        half[2] = half[0]
    # yaw spins about y, so the in-plane reach grows to the rotated diagonal;
    # keeping that inside the fixed meshing domain is what makes the union a
    # closed field (open fields clip at the boundary and cannot be watertight)
    planar = math.hypot(half[0], half[2])
    room = 1.25 - np.array([planar, half[1], planar])
    center = rng.uniform(-room, room) * 0.8
    yaw = rng.uniform(-math.pi, math.pi * 0.999)
    return PartPrimitive(kind, tuple(center), tuple(half), yaw)


# -- encoding --------------------------------------------------------------------


def test_encode_unit_box_layout():
    p = PartPrimitive("box", (0, 0, 0), (1, 1, 1), 0.0)
    row = encode_part(p, 32)
    expect16 = [1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0]
    assert np.array_equal(row[:16], expect16)
    assert np.all(row[16:] == 0)


def test_encode_requires_width():
    p = PartPrimitive("box", (0, 0, 0), (0.5, 0.5, 0.5), 0.0)
    with pytest.raises(ValueError):
        encode_part(p, 15)


def test_round_trip_random():
    for _ in range(200):
        p = random_part(RNG)
        q = decode_part(encode_part(p, 48))
        assert q.kind == p.kind
        assert q.center == p.center
        assert q.half_extents == p.half_extents
        assert abs(q.yaw - p.yaw) < 1e-12


def test_round_trip_and_distinctness_on_grid():
    # full parameter grid: every encoding decodes back, no two encodings collide
    centers = np.linspace(-0.6, 0.6, 5)
    extents = np.linspace(0.05, 0.55, 3)
    yaws = -math.pi + math.pi / 4 * np.arange(8)
    seen = set()
    count = 0
    for kind in ("box", "cylinder", "ellipsoid"):
        for cx, cy, cz in itertools.product(centers, repeat=3):
            for hx, hy, hz in itertools.product(extents, repeat=3):
                for yaw in yaws:
                    p = PartPrimitive(kind, (cx, cy, cz), (hx, hy, hz), float(yaw))
                    row = encode_part(p, 16)
                    key = row.tobytes()
                    assert key not in seen
                    seen.add(key)
                    q = decode_part(row)
                    assert q.kind == p.kind
                    assert q.center == p.center
                    assert q.half_extents == p.half_extents
                    assert abs(q.yaw - p.yaw) < 1e-12
                    count += 1
    assert count == 3 * 5**3 * 3**3 * 8


def test_decode_argmax_tie_goes_low():
    row = np.zeros(16)
    row[0], row[1], row[2] = 0.4, 0.39, 0.1
    row[6:9] = 0.3
    row[9] = 1.0
    row[11] = 1.0
    assert decode_part(row).kind == "box"
    row[1] = 0.4  # exact tie between box and cylinder
    assert decode_part(row).kind == "box"


def test_decode_clamps_extents_and_center():
    row = np.zeros(16)
    row[0] = 1.0
    row[6:9] = [-0.5, 2.0, 0.1]
    row[3:6] = [5.0, -5.0, 0.0]
    row[9] = 1.0
    p = decode_part(row)
    assert p.half_extents[0] == pytest.approx(0.02)
    assert abs(p.center[0]) <= 1.1
    assert abs(p.center[1]) <= 1.1


def test_decode_rejects_nonfinite():
    row = np.zeros(16)
    row[4] = np.nan
    with pytest.raises(FloatingPointError):
        decode_part(row)


def test_decode_total_on_random_noise():
    for _ in range(300):
        decode_part(RNG.normal(scale=3.0, size=24))


# -- signed distance ----------------------------------------------------------------


def test_sdf_unit_box_center_and_outside():
    box = PartPrimitive("box", (0, 0, 0), (1, 1, 1), 0.0)
    assert sdf([box], (0.0, 0.0, 0.0)) == pytest.approx(-1.0, abs=1e-12)
    assert sdf([box], (2.0, 0.0, 0.0)) == pytest.approx(1.0, abs=1e-12)


def test_sdf_union_of_disjoint_boxes():
    a = PartPrimitive("box", (-0.6, 0, 0), (0.2, 0.2, 0.2), 0.0)
    b = PartPrimitive("box", (0.6, 0, 0), (0.2, 0.2, 0.2), 0.0)
    q = (0.6, 0.05, 0.0)
    assert sdf([a, b], q) == pytest.approx(ref_box_sdf(b.center, b.half_extents, b.yaw, q), abs=1e-12)
    assert sdf([a, b], q) < 0


def test_sdf_empty_parts():
    with pytest.raises(EmptyShapeError):
        sdf([], (0, 0, 0))


def test_sdf_matches_reference_everywhere():
    for _ in range(40):
        parts = [random_part(RNG) for _ in range(RNG.integers(1, 5))]
        pts = RNG.uniform(-1.25, 1.25, size=(50, 3))
        mine = sdf(parts, pts)
        ref = np.array([ref_sdf(parts, q) for q in pts])
        assert np.allclose(mine, ref, atol=1e-12)


def test_sdf_lipschitz_along_rays():
    for _ in range(30):
        parts = [random_part(RNG) for _ in range(3)]
        origin = RNG.uniform(-1.2, 1.2, size=3)
        direction = RNG.normal(size=3)
        direction /= np.linalg.norm(direction)
        ts = np.sort(RNG.uniform(0, 2.0, size=20))
        pts = origin + ts[:, None] * direction
        vals = sdf(parts, pts)
        for i in range(len(ts) - 1):
            assert abs(vals[i + 1] - vals[i]) <= (ts[i + 1] - ts[i]) + 1e-9


def test_ellipsoid_zero_set_is_exact():
    p = PartPrimitive("ellipsoid", (0.1, -0.2, 0.3), (0.5, 0.3, 0.2), 0.7)
    theta = RNG.uniform(0, 2 * math.pi, size=200)
    phi = RNG.uniform(0, math.pi, size=200)
    h = np.array(p.half_extents)
    local = np.stack(
        [
            h[0] * np.sin(phi) * np.cos(theta),
            h[1] * np.cos(phi),
            h[2] * np.sin(phi) * np.sin(theta),
        ],
        axis=1,
    )
    cy, sy = math.cos(p.yaw), math.sin(p.yaw)
    world = np.stack(
        [
            cy * local[:, 0] + sy * local[:, 2],
            local[:, 1],
            -sy * local[:, 0] + cy * local[:, 2],
        ],
        axis=1,
    ) + np.array(p.center)
    assert np.max(np.abs(sdf([p], world))) < 1e-9


# -- responsibility ------------------------------------------------------------------


def test_responsibility_inside_single_part():
    a = PartPrimitive("box", (-0.6, 0, 0), (0.2, 0.2, 0.2), 0.0)
    b = PartPrimitive("ellipsoid", (0.6, 0, 0), (0.2, 0.2, 0.2), 0.0)
    assert part_responsibility([a, b], (0.6, 0, 0)) == 1
    assert part_responsibility([a, b], (-0.6, 0, 0)) == 0


def test_responsibility_tie_goes_low():
    a = PartPrimitive("box", (-0.5, 0, 0), (0.2, 0.2, 0.2), 0.0)
    b = PartPrimitive("box", (0.5, 0, 0), (0.2, 0.2, 0.2), 0.0)
    c = PartPrimitive("box", (0, 0.9, 0), (0.1, 0.1, 0.1), 0.0)
    d = PartPrimitive("box", (0.5, 0, 0), (0.2, 0.2, 0.2), 0.0)  # duplicate of b
    assert part_responsibility([a, b, c, d], (0.0, 0.0, 0.0)) == 0  # a vs b tie
    assert part_responsibility([c, b, c, d], (0.5, 0.0, 0.0)) == 1  # b vs d tie


def test_responsibility_matches_brute_force():
    parts = [random_part(np.random.default_rng(100 + i)) for i in range(6)]
    pts = np.random.default_rng(42).uniform(-1.25, 1.25, size=(10_000, 3))
    got = part_responsibility(parts, pts)
    per_part = np.stack(
        [[REF[p.kind](p.center, p.half_extents, p.yaw, q) for p in parts] for q in pts]
    )
    expect = np.argmin(per_part, axis=1)
    assert np.array_equal(got, expect)


# -- meshing ------------------------------------------------------------------------


def edge_counts(faces):
    counts = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def test_mesh_sphere_watertight_and_on_surface():
    sphere = PartPrimitive("ellipsoid", (0, 0, 0), (0.5, 0.5, 0.5), 0.0)
    mesh = extract_mesh([sphere], grid_res=32)
    assert not mesh.is_empty
    cell_diag = (2.5 / 32) * math.sqrt(3)
    vals = sdf([sphere], mesh.vertices)
    assert np.max(np.abs(vals)) <= 2 * cell_diag
    assert all(n == 2 for n in edge_counts(mesh.faces).values())


def test_mesh_empty_when_no_crossing():
    tiny = PartPrimitive("box", (0, 0, 0), (0.05, 0.05, 0.05), 0.0)
    mesh = extract_mesh([tiny], grid_res=8, iso=-5.0)
    assert mesh.is_empty


def test_mesh_grid_res_validation():
    p = PartPrimitive("box", (0, 0, 0), (0.5, 0.5, 0.5), 0.0)
    with pytest.raises(ValueError):
        extract_mesh([p], grid_res=4)
    with pytest.raises(EmptyShapeError):
        extract_mesh([], grid_res=16)


def five_box_chair():
    seat = PartPrimitive("box", (0, 0.0, 0), (0.45, 0.06, 0.45), 0.0)
    back = PartPrimitive("box", (0, 0.45, -0.4), (0.45, 0.4, 0.05), 0.0)
    legs = [
        PartPrimitive("box", (sx * 0.38, -0.4, sz * 0.38), (0.06, 0.35, 0.06), 0.0)
        for sx in (-1, 1)
        for sz in (-1, 1)
    ]
    return [seat, back] + legs[:3]


def test_mesh_face_labels_cover_parts():
    parts = five_box_chair()
    mesh = extract_mesh(parts, grid_res=48)
    assert len(set(mesh.face_part.tolist())) >= 5


def test_mesh_labels_agree_with_responsibility():
    parts = five_box_chair()
    mesh = extract_mesh(parts, grid_res=24)
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    assert np.array_equal(mesh.face_part, part_responsibility(parts, centroids))


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_union_mesh_watertight(seed):
    rng = np.random.default_rng(seed)
    parts = [random_part(rng) for _ in range(rng.integers(1, 5))]
    mesh = extract_mesh(parts, grid_res=20)
    if mesh.is_empty:
        return
    assert all(n == 2 for n in edge_counts(mesh.faces).values())


# -- surface sampling -----------------------------------------------------------------


def one_triangle_mesh():
    verts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return LabeledMesh(verts, np.array([[0, 1, 2]]), np.array([0]))


def test_sample_surface_stays_inside_triangle():
    mesh = one_triangle_mesh()
    pts = sample_surface(mesh, 1000, seed=3)
    # barycentric coords for the right triangle with legs 2 and 1
    u = pts[:, 0] / 2.0
    v = pts[:, 1]
    assert np.all(u >= -1e-12)
    assert np.all(v >= -1e-12)
    assert np.all(u + v <= 1 + 1e-12)
    assert np.all(np.abs(pts[:, 2]) < 1e-9)


def test_sample_surface_area_weighting():
    verts = np.array(
        [
            [0, 0, 0], [2, 0, 0], [0, 1, 0],  # area 1
            [0, 0, 1], [3, 0, 1], [0, 2, 1],  # area 3
        ],
        dtype=float,
    )
    mesh = LabeledMesh(verts, np.array([[0, 1, 2], [3, 4, 5]]), np.array([0, 1]))
    pts = sample_surface(mesh, 40_000, seed=9)
    n_second = int(np.sum(pts[:, 2] > 0.5))
    assert abs(n_second - 30_000) < 0.02 * 40_000


def test_sample_surface_deterministic():
    mesh = one_triangle_mesh()
    a = sample_surface(mesh, 500, seed=77)
    b = sample_surface(mesh, 500, seed=77)
    assert np.array_equal(a, b)


def test_sample_surface_rejects_empty():
    empty = LabeledMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int), np.zeros(0, dtype=int))
    with pytest.raises(EmptyShapeError):
        sample_surface(empty, 10, seed=0)
    with pytest.raises(ValueError):
        sample_surface(one_triangle_mesh(), 0, seed=0)


# -- part sets -------------------------------------------------------------------------


def test_encode_parts_slotting():
    a = random_part(np.random.default_rng(1))
    b = random_part(np.random.default_rng(2))
    ps = encode_parts([a, b], [0, 3], m=8, d_model=32)
    assert ps.c.tolist() == [1, 0, 0, 1, 0, 0, 0, 0]
    assert np.all(ps.z[1] == 0)
    parts, slots = decode_partset(ps)
    assert slots == [0, 3]
    assert parts[0].kind == a.kind and parts[1].kind == b.kind


def test_encode_parts_validation():
    a = random_part(np.random.default_rng(3))
    with pytest.raises(ValueError):
        encode_parts([a, a], [2, 2], m=8, d_model=32)
    with pytest.raises(ValueError):
        encode_parts([a], [9], m=8, d_model=32)


def test_partset_validation():
    with pytest.raises(ValueError):
        PartSet(4, 16, np.zeros((4, 16)), np.array([0, 0.5, 2.0, 0]))
    with pytest.raises(ValueError):
        PartSet(4, 16, np.zeros((3, 16)), np.zeros(4))


# -- export ----------------------------------------------------------------------------


def test_obj_export_groups_faces_by_part():
    parts = [
        PartPrimitive("box", (-0.5, 0, 0), (0.3, 0.3, 0.3), 0.0),
        PartPrimitive("box", (0.5, 0, 0), (0.3, 0.3, 0.3), 0.0),
    ]
    mesh = extract_mesh(parts, grid_res=16)
    text = mesh_to_obj(mesh)
    assert "g part_0" in text and "g part_1" in text
    f_lines = [ln for ln in text.splitlines() if ln.startswith("f ")]
    assert len(f_lines) == len(mesh.faces)
    assert min(int(tok) for ln in f_lines for tok in ln.split()[1:]) == 1


def test_mesh_json_round_trip():
    mesh = extract_mesh([PartPrimitive("ellipsoid", (0, 0, 0), (0.4, 0.3, 0.5), 0.3)], 16)
    again = mesh_from_json(mesh_to_json(mesh))
    assert np.array_equal(again.faces, mesh.faces)
    assert np.array_equal(again.face_part, mesh.face_part)
    assert np.allclose(again.vertices, mesh.vertices, atol=1e-15)


def test_mesh_obj_round_trip_and_loader(tmp_path):
    from sketchparts.shapes import load_mesh, mesh_from_obj

    parts = [
        PartPrimitive("box", (-0.5, 0, 0), (0.3, 0.3, 0.3), 0.0),
        PartPrimitive("cylinder", (0.5, 0, 0), (0.2, 0.4, 0.2), 0.4),
    ]
    mesh = extract_mesh(parts, grid_res=16)
    again = mesh_from_obj(mesh_to_obj(mesh))
    assert np.allclose(again.vertices, mesh.vertices, atol=1e-7)
    assert sorted(map(tuple, again.faces.tolist())) == sorted(map(tuple, mesh.faces.tolist()))
    assert set(again.face_part.tolist()) == set(mesh.face_part.tolist())

    p = tmp_path / "m.obj"
    p.write_text(mesh_to_obj(mesh))
    assert not load_mesh(str(p)).is_empty
    bad = tmp_path / "m.xyz"
    bad.write_text("nope")
    with pytest.raises(ValueError):
        load_mesh(str(bad))
    with pytest.raises(ValueError):
        mesh_from_obj("v 0 0 0\nf 1 1\n")
