import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaradar import forest
from aquaradar.forest import ForestConfig


def test_single_tree_fits_step_function():
    x = np.linspace(0, 1, 40)[:, None]
    y = np.where(x < 0.5, 1.0, 3.0)
    tree = forest.fit_tree(x, y, np.random.default_rng(0))
    assert np.allclose(tree.predict(x), y)
    assert tree.n_nodes == 3


def test_split_between_adjacent_floats():
    a = 0.3
    x = np.array([[a], [np.nextafter(a, 1.0)]] * 5)
    y = np.array([[0.0], [1.0]] * 5)
    tree = forest.fit_tree(x, y, np.random.default_rng(0))
    assert np.allclose(tree.predict(x), y)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 20))
def test_leaves_respect_min_leaf_and_depth(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(60, 4))
    y = rng.normal(size=(60, 2))
    tree = forest.fit_tree(x, y, rng, max_depth=3, min_leaf=5)
    leaves = tree.apply(x)
    counts = np.bincount(leaves, minlength=tree.n_nodes)[tree.feature == -1]
    assert counts[counts > 0].min() >= 5
    assert tree.n_nodes <= 2 ** 4 - 1


def test_forest_is_deterministic_and_order_free():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 6))
    y = rng.dirichlet(np.ones(3), 50)
    cfg = ForestConfig(n_trees=10, seed=3)
    a = forest.forest_fit(x, y, cfg)
    perm = rng.permutation(50)
    b = forest.forest_fit(x[perm], y[perm], cfg)
    assert np.array_equal(forest.forest_predict(a, x), forest.forest_predict(b, x))
    assert a.tree_count == 10


def test_forest_prediction_on_simplex():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 3))
    y = np.eye(3)[rng.integers(0, 3, 40)]
    m = forest.forest_fit(x, y, ForestConfig(n_trees=5))
    p = forest.forest_predict(m, x)
    assert p.min() >= 1e-6 / (1 + 3e-6)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert forest.forest_predict(m, x[0]).shape == (3,)


def test_forest_learns_separable_classes():
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 3, 90)
    x = np.eye(3)[labels] * 5 + rng.normal(size=(90, 3))
    y = np.eye(3)[labels]
    m = forest.forest_fit(x, y, ForestConfig(n_trees=20))
    assert np.mean(np.argmax(forest.forest_predict(m, x), axis=1) == labels) > 0.95


def test_forest_validation():
    with pytest.raises(forest.EmptyDataError):
        forest.forest_fit(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(forest.EmptyDataError):
        forest.forest_fit(np.zeros((5, 2)), np.zeros((5, 2)))
    m = forest.forest_fit(np.random.default_rng(0).normal(size=(12, 2)), np.ones((12, 2)),
                          ForestConfig(n_trees=2))
    with pytest.raises(ValueError):
        forest.forest_predict(m, np.zeros((1, 3)))
