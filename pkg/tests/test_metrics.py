import itertools
import math

import numpy as np
import pytest

from sketchparts.metrics import (
    FeatureStats,
    chamfer,
    chamfer_brute,
    emd,
    evaluation_report,
    extract_view_features,
    feature_stats,
    frechet_distance,
    rasterize_depth,
    retrieval_topk,
    view_stats,
)
from sketchparts.render import Camera
from sketchparts.shapes import PartPrimitive, extract_mesh

RNG = np.random.default_rng(99)


# -- chamfer -----------------------------------------------------------------------


def test_chamfer_pinned_values():
    assert chamfer([[0, 0, 0]], [[0, 0, 0]]) == 0.0
    assert chamfer([[0, 0, 0]], [[1, 0, 0]]) == 2.0
    assert chamfer([[0, 0, 0], [2, 0, 0]], [[1, 0, 0]]) == 2.0


def test_chamfer_accelerated_equals_brute_exactly():
    for trial in range(20):
        rng = np.random.default_rng(trial)
        a = rng.normal(size=(1000, 3))
        b = rng.normal(size=(1000, 3))
        assert chamfer(a, b) == chamfer_brute(a, b)


def test_chamfer_symmetry_zero_scaling():
    a = RNG.normal(size=(50, 3))
    b = RNG.normal(size=(70, 3))
    assert chamfer(a, b) == chamfer(b, a)
    assert chamfer(a, a) == 0.0
    s = 3.0
    assert abs(chamfer(s * a, s * b) - s * s * chamfer(a, b)) < 1e-9


def test_chamfer_rejects_empty_or_bad_shape():
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        chamfer(np.zeros((4, 2)), np.zeros((4, 2)))


# -- emd ---------------------------------------------------------------------------


def emd_exhaustive(a, b):
    n = len(a)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(a[i] - b[perm[i]]) for i in range(n))
        best = min(best, cost)
    return best


def test_emd_pinned_values():
    a = np.array([[0.0, 0, 0]])
    b = np.array([[3.0, 4.0, 0]])
    assert abs(emd(a, b) - 5.0) < 1e-12
    a = np.array([[0.0, 0, 0], [2, 0, 0]])
    b = np.array([[1.0, 0, 0], [3, 0, 0]])
    assert abs(emd(a, b) - 2.0) < 1e-12


def test_emd_zero_under_permutation():
    a = RNG.normal(size=(30, 3))
    perm = RNG.permutation(30)
    assert emd(a, a[perm]) < 1e-12


def test_emd_matches_exhaustive_all_small_sizes():
    for trial in range(50):
        rng = np.random.default_rng(trial + 1000)
        n = int(rng.integers(1, 7))
        a = rng.normal(size=(n, 3))
        b = rng.normal(size=(n, 3))
        assert abs(emd(a, b) - emd_exhaustive(a, b)) < 1e-9


def test_emd_symmetry_and_size_guard():
    a = RNG.normal(size=(20, 3))
    b = RNG.normal(size=(20, 3))
    assert abs(emd(a, b) - emd(b, a)) < 1e-9
    with pytest.raises(ValueError):
        emd(a, b[:10])


def test_emd_auction_close_to_exact():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(600, 3))
    b = rng.normal(size=(600, 3))
    exact = emd(a, b, force_exact=True)
    approx = emd(a, b)
    # auction epsilon budget: 1e-3 of the largest pairwise distance
    diff = a[:, None, :] - b[None, :, :]
    budget = 2e-3 * float(np.sqrt((diff * diff).sum(axis=2)).max())
    assert exact <= approx <= exact + budget


# -- frechet -----------------------------------------------------------------------


def _stats_1d(mu, var):
    return FeatureStats([(np.array([mu]), np.array([[var]]))])


def test_frechet_identical_zero():
    s = _stats_1d(0.3, 2.0)
    assert frechet_distance(s, s) == 0.0


def test_frechet_1d_mean_shift():
    got = frechet_distance(_stats_1d(0.0, 1.0), _stats_1d(1.0, 1.0))
    assert abs(got - 1.0) < 1e-9


def test_frechet_1d_variance_gap():
    # closed form (sigma1 - sigma2)^2 = (2 - 1)^2
    got = frechet_distance(_stats_1d(0.0, 4.0), _stats_1d(0.0, 1.0))
    assert abs(got - 1.0) < 1e-9


def test_frechet_1d_random_closed_form():
    for trial in range(30):
        rng = np.random.default_rng(trial)
        m1, m2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.1, 5.0, size=2)
        want = (m1 - m2) ** 2 + (math.sqrt(v1) - math.sqrt(v2)) ** 2
        got = frechet_distance(_stats_1d(m1, v1), _stats_1d(m2, v2))
        assert abs(got - want) < 1e-9


def test_frechet_diagonal_multidim():
    mu1, mu2 = np.zeros(3), np.array([1.0, 0.0, 2.0])
    s1 = np.diag([1.0, 4.0, 9.0])
    s2 = np.diag([4.0, 1.0, 1.0])
    want = 5.0 + (1 - 2) ** 2 + (2 - 1) ** 2 + (3 - 1) ** 2
    got = frechet_distance(FeatureStats([(mu1, s1)]), FeatureStats([(mu2, s2)]))
    assert abs(got - want) < 1e-9


def test_frechet_symmetric():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(40, 6))
    b = rng.normal(size=(40, 6)) * 2 + 1
    sa = FeatureStats([(a.mean(0), np.cov(a.T))])
    sb = FeatureStats([(b.mean(0), np.cov(b.T))])
    assert abs(frechet_distance(sa, sb) - frechet_distance(sb, sa)) < 1e-9


def test_feature_stats_guards():
    with pytest.raises(ValueError):
        FeatureStats([(np.zeros(3), np.zeros((2, 2)))])
    with pytest.raises(ValueError):
        FeatureStats([(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))])
    with pytest.raises(ValueError):
        frechet_distance(_stats_1d(0, 1), FeatureStats([(np.zeros(2), np.eye(2))]))


# -- feature extractor ---------------------------------------------------------------


def test_features_deterministic_and_sized():
    img = RNG.uniform(size=(64, 64))
    f1 = extract_view_features(img)
    f2 = extract_view_features(img)
    assert f1.shape == (64,)
    assert np.array_equal(f1, f2)


def test_features_distinguish_images():
    a = np.zeros((64, 64))
    b = np.ones((64, 64))
    assert not np.allclose(extract_view_features(a), extract_view_features(b))


def test_feature_stats_identical_sets_zero():
    imgs = [RNG.uniform(size=(48, 48)) for _ in range(3)]
    s = feature_stats([imgs])
    # eigendecomposition roundoff keeps this near, not exactly at, zero
    assert abs(frechet_distance(s, s)) < 1e-6


def test_feature_rejects_non_square():
    with pytest.raises(ValueError):
        extract_view_features(np.zeros((32, 48)))


# -- rasterizer, retrieval, report ----------------------------------------------------


def _box_mesh():
    part = PartPrimitive("box", (0, 0, 0), (0.6, 0.4, 0.5), 0.3)
    return extract_mesh([part], grid_res=24)


def test_rasterize_depth_renders_something():
    mesh = _box_mesh()
    img = rasterize_depth(mesh, Camera(azimuth=0.5, elevation=0.3, distance=3.0), res=96)
    assert img.shape == (96, 96)
    assert img.max() > 0.5  # foreground present
    assert (img == 0).mean() > 0.2  # background present


def test_retrieval_rank1_self_and_order():
    mesh_a = _box_mesh()
    part_b = PartPrimitive("ellipsoid", (0.1, 0, 0), (0.5, 0.5, 0.5), 0.0)
    mesh_b = extract_mesh([part_b], grid_res=24)
    part_c = PartPrimitive("cylinder", (0, -0.2, 0), (0.3, 0.7, 0.3), 0.0)
    mesh_c = extract_mesh([part_c], grid_res=24)
    training = [("ball", mesh_b), ("box", mesh_a), ("tube", mesh_c)]
    got = retrieval_topk(mesh_a, training, k=3, n_points=500, seed=3)
    assert got[0]["id"] == "box" and got[0]["cd"] < 1e-9
    cds = [r["cd"] for r in got]
    assert cds == sorted(cds)


def test_retrieval_matches_brute_sort_oracle():
    meshes = []
    for i in range(5):
        rng = np.random.default_rng(i)
        part = PartPrimitive("box", (0, 0, 0),
                             tuple(rng.uniform(0.2, 0.8, size=3)), float(rng.uniform(-1, 1)))
        meshes.append((f"m{i}", extract_mesh([part], grid_res=16)))
    query = meshes[3][1]
    got = retrieval_topk(query, meshes, k=5, n_points=300, seed=11)
    from sketchparts.shapes import sample_surface

    q = sample_surface(query, 300, seed=11)
    want = sorted(
        ({"id": mid, "cd": chamfer(q, sample_surface(m, 300, seed=11))} for mid, m in meshes),
        key=lambda r: (r["cd"], r["id"]),
    )
    assert [r["id"] for r in got] == [r["id"] for r in want]


def test_retrieval_guards():
    mesh = _box_mesh()
    with pytest.raises(ValueError):
        retrieval_topk(mesh, [], k=1)
    with pytest.raises(ValueError):
        retrieval_topk(mesh, [("a", mesh)], k=2)


def test_evaluation_report_schema_and_self_zero():
    mesh = _box_mesh()
    rep = evaluation_report([("x", mesh)], [("x", mesh)], n_points=500, seed=4, views=2)
    for key in ("cd_mean", "cd_per_item", "emd_mean", "frechet", "n_points", "seed"):
        assert key in rep
    # same mesh, different sample seeds: bounded by sampling density, not zero
    assert rep["cd_mean"] < 0.02
    assert abs(rep["frechet"]) < 1e-6  # identical image sets
    with pytest.raises(ValueError):
        evaluation_report([], [], n_points=10)
