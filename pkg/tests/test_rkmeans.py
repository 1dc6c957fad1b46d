"""Grid-coreset clustering: conservation, degenerate cases, quality."""

import numpy as np
import pytest

from aggbatch.datagen import gaussian_mixture
from aggbatch.errors import TrainingError
from aggbatch.ml.rkmeans import (
    nearest_centroid,
    step1_batch,
    train_rkmeans,
    weighted_lloyd,
)


def built_mixture(seed=7, n=2000, k=3):
    dataset, _ = gaussian_mixture(seed=seed, n=n, k=k)
    catalog, tree, _ = dataset.build()
    return catalog, tree


def test_step1_is_one_query_per_dimension(built=None):
    catalog, tree = built_mixture()
    batch = step1_batch(catalog, tree, ["x0", "x1"])
    assert [q.id for q in batch] == ["dim[x0]", "dim[x1]"]
    for q in batch:
        assert len(q.group_by) == 1
        # a bare count: the weight of each distinct coordinate
        assert q.aggregates[0].factors == ()


def test_step1_rejects_categorical_dimensions(tiny):
    catalog, tree, _ = tiny
    with pytest.raises(TrainingError):
        step1_batch(catalog, tree, ["a"])


def test_grid_weights_sum_to_row_count():
    catalog, tree = built_mixture(seed=21, n=1500)
    model = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=1, baseline_restarts=0)
    assert model.n_rows == 1500.0
    # conservation is asserted inside the trainer; re-check the ratio here
    assert 0 < model.grid_size <= 1500
    assert model.coreset_ratio == model.grid_size / 1500.0


def test_k1_centroid_is_the_weighted_mean():
    catalog, tree = built_mixture(seed=33, n=800)
    model = train_rkmeans(catalog, tree, ["x0", "x1"], k=1, seed=3, baseline_restarts=0)
    pts = np.array([
        [float(catalog.tables["Points"].columns[d][i]) for d in ("x0", "x1")]
        for i in range(800)
    ])
    want = pts.mean(axis=0)
    got = np.array(model.centroids[0])
    assert np.abs(got - want).max() < 1e-9


def test_weighted_lloyd_respects_weights():
    # two sites, one carrying 9x the weight: the k=1 centroid is the
    # weighted mean, not the midpoint
    pts = np.array([[0.0], [10.0]])
    wts = np.array([9.0, 1.0])
    rng = np.random.default_rng(0)
    centroids, assign, obj = weighted_lloyd(pts, wts, 1, rng)
    assert abs(centroids[0, 0] - 1.0) < 1e-12
    expected_obj = 9.0 * 1.0 + 1.0 * 81.0
    assert abs(obj - expected_obj) < 1e-9


def test_lloyd_k_exceeding_sites_still_covers():
    pts = np.array([[0.0], [5.0]])
    wts = np.array([1.0, 1.0])
    with pytest.warns(UserWarning, match="reducing k"):
        centroids, assign, obj = weighted_lloyd(pts, wts, 4, np.random.default_rng(1))
    assert obj < 1e-18
    assert len(centroids) <= 4


def test_well_separated_mixture_recovers_components():
    catalog, tree = built_mixture(seed=9, n=4000, k=4)
    model = train_rkmeans(catalog, tree, ["x0", "x1"], k=4, seed=5)
    assert model.relative_gap is not None
    assert model.relative_gap < 0.10
    assert model.coreset_ratio < 0.05
    assert len(model.centroids) == 4


def test_nearest_centroid_basics():
    centroids = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    assert nearest_centroid([1.0, 1.0], centroids) == 0
    assert nearest_centroid([9.0, 1.0], centroids) == 1
    assert nearest_centroid([10.0, 0.0], centroids) == 1  # exact hit
    # equidistant between 0 and 1: smallest index wins
    assert nearest_centroid([5.0, 0.0], centroids) == 0
    with pytest.raises(TrainingError):
        nearest_centroid([1.0], centroids)


def test_self_centroid_probe():
    catalog, tree = built_mixture(seed=11, n=1000, k=3)
    model = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=2, baseline_restarts=0)
    cents = np.array(model.centroids)
    for i, c in enumerate(model.centroids):
        assert nearest_centroid(c, cents) == i


def test_deterministic_for_a_seed():
    catalog, tree = built_mixture(seed=13, n=1200)
    a = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=4, baseline_restarts=0)
    b = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=4, baseline_restarts=0)
    assert a.centroids == b.centroids
    assert a.per_dim_centroids == b.per_dim_centroids
    c = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=5, baseline_restarts=0)
    assert a.centroids != c.centroids


def test_total_query_count_is_dims_plus_one():
    catalog, tree = built_mixture(seed=17, n=600)
    model = train_rkmeans(catalog, tree, ["x0", "x1"], k=2, seed=6, baseline_restarts=0)
    assert len(model.engine_queries) == 3  # one per dimension, plus the grid
    assert model.engine_queries == ["dim[x0]", "dim[x1]", "grid"]
