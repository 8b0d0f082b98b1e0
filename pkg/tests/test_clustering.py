import json

import numpy as np
import pytest

from ellipseg.clustering import (NOISE, ClusterParams, assignment_from_image, assignment_summary,
                                 assignment_to_csv, cluster_masked_embedding, core_distances, hdbscan,
                                 mutual_reachability_mst)

from oracles import brute_force_hdbscan, brute_force_mst_weight, mutual_reachability_matrix, same_partition


def random_fixture(rng, k):
    n = int(rng.integers(8, 41))
    n_blobs = int(rng.integers(1, 4))
    centers = rng.uniform(-10, 10, (n_blobs, 2))
    pts = centers[rng.integers(0, n_blobs, n)] + rng.normal(0, 1, (n, 2))
    if k % 4 == 3:
        pts = np.round(pts)  # many tied distances
    params = ClusterParams(int(rng.integers(2, 9)), int(rng.integers(1, 6)),
                           ("euclidean", "manhattan")[k % 2])
    return pts, params


def test_params_validation():
    with pytest.raises(ValueError):
        ClusterParams(min_cluster_size=1)
    with pytest.raises(ValueError):
        ClusterParams(metric="cosine")


def test_core_distance_counts_point_itself():
    pts = np.array([[0.0], [1.0], [3.0]])
    assert core_distances(pts, 1).tolist() == [0, 0, 0]
    assert core_distances(pts, 2).tolist() == [1, 1, 2]


def test_mst_matches_kruskal():
    rng = np.random.default_rng(0)
    for metric in ("euclidean", "manhattan"):
        pts = rng.normal(size=(30, 3))
        core = core_distances(pts, 4, metric)
        edges = mutual_reachability_mst(pts, core, metric)
        assert len(edges) == 29
        ref = brute_force_mst_weight(mutual_reachability_matrix(pts, 4, metric))
        assert edges[:, 2].sum() == pytest.approx(ref, rel=1e-12)


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    for k in range(60):
        pts, params = random_fixture(rng, k)
        got = hdbscan(pts, params).labels
        ref = brute_force_hdbscan(pts, params.min_cluster_size, params.min_samples, params.metric)
        assert same_partition(got, ref), (k, params)


def test_two_gaussian_blobs():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 1, (200, 2))
    b = rng.normal(0, 1, (200, 2)) + [10, 0]
    res = hdbscan(np.vstack([a, b]), ClusterParams(min_cluster_size=50))
    assert res.n_clusters == 2
    assert res.n_noise <= 4
    first = set(res.labels[:200].tolist()) - {NOISE}
    second = set(res.labels[200:].tolist()) - {NOISE}
    assert len(first) == 1 and len(second) == 1 and first != second


def test_identical_points_one_cluster():
    res = hdbscan(np.ones((50, 3)), ClusterParams(min_cluster_size=10))
    assert res.n_clusters == 1 and res.n_noise == 0


def test_too_few_points_all_noise():
    pts = np.random.default_rng(3).uniform(size=(30, 2))
    res = hdbscan(pts, ClusterParams(min_cluster_size=100))
    assert res.n_clusters == 0 and res.n_noise == 30


def test_labels_ordered_by_first_point():
    rng = np.random.default_rng(4)
    pts = np.vstack([rng.normal(0, 0.1, (20, 2)) + [5, 5], rng.normal(0, 0.1, (20, 2))])
    lab = hdbscan(pts, ClusterParams(min_cluster_size=5, min_samples=3)).labels
    assert lab[0] == 0 and lab[20] == 1


def test_masked_embedding():
    f = np.zeros((6, 10, 2))
    f[:, 5:] = [5.0, 5.0]
    mask = np.ones((6, 10), int)
    mask[0, 0] = 0
    out = cluster_masked_embedding(f, mask, ClusterParams(min_cluster_size=5, min_samples=2)).pixels
    assert out[0, 0] == 0
    # the larger cluster (right half, 30 px) gets id 1
    assert set(np.unique(out[:, 5:])) == {1}
    assert set(np.unique(out[1:, :5])) == {2}
    empty = cluster_masked_embedding(f, np.zeros((6, 10)), ClusterParams(min_cluster_size=5))
    assert not empty.pixels.any()
    with pytest.raises(ValueError):
        cluster_masked_embedding(f, np.ones((3, 3)))


def test_csv_and_summary():
    f = np.zeros((2, 3, 2))
    f[:, 2] = 10
    mask = np.ones((2, 3), int)
    params = ClusterParams(min_cluster_size=2, min_samples=1)
    li = cluster_masked_embedding(f, mask, params)
    a = assignment_from_image(li, mask)
    lines = assignment_to_csv(a).splitlines()
    assert lines[0] == "pixel_x,pixel_y,label"
    assert lines[1] == "0,0,0" and lines[3] == "2,0,1"
    assert json.loads(assignment_summary(a, params)) == {"min_cluster_size": 2, "n_clusters": 2, "n_noise": 0}
