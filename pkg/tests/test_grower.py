"""Tests for single-tree growth."""

import numpy as np
import pytest

from smoothboost.evalkit import signal_r2
from smoothboost.grower import (
    DegenerateCandidateError,
    GrowthConfig,
    GrowthState,
    candidate_locations,
    draw_slope,
    grow_tree,
    search_best_split,
    solve_leaf_weights,
)
from smoothboost.model import (
    Dataset,
    DegenerateDataError,
    InvalidArgumentError,
    transition,
    tree_predict,
)


def _config(seed=0, splits=1, gamma=(1.0, 1.0), fraction=1.0, grid=100, n_jobs=1):
    return GrowthConfig(
        splits=splits,
        gamma_range=gamma,
        variable_fraction=fraction,
        threshold_grid=grid,
        rng=np.random.default_rng(seed),
        n_jobs=n_jobs,
    )


def _sse(tree, data, targets):
    return float(np.sum((targets - tree_predict(tree, data.covariates)) ** 2))


def _cart_sse(covariates, targets):
    """Exhaustive one-split regression tree, independent of the smooth code."""
    best = np.sum((targets - targets.mean()) ** 2)
    for column in covariates.T:
        values = np.unique(column)
        for c in (values[:-1] + values[1:]) / 2:
            above, below = targets[column > c], targets[column <= c]
            sse = np.sum((above - above.mean()) ** 2) + np.sum((below - below.mean()) ** 2)
            best = min(best, sse)
    return best


# --------------------------------------------------------------------------- config and helpers

def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        _config(splits=0)
    with pytest.raises(InvalidArgumentError):
        _config(gamma=(2.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        _config(fraction=0.0)


def test_candidate_locations_are_midpoints():
    np.testing.assert_array_equal(candidate_locations(np.array([0.0, 10.0]), 100), [5.0])
    np.testing.assert_array_equal(candidate_locations(np.array([3.0, 1.0, 2.0, 1.0]), 100), [1.5, 2.5])


def test_candidate_locations_respect_grid():
    column = np.random.default_rng(1).normal(size=1000)
    locations = candidate_locations(column, 10)
    assert len(locations) <= 10
    assert np.all(np.diff(locations) > 0)
    assert column.min() < locations[0] and locations[-1] < column.max()


def test_draw_slope_degenerate_interval():
    assert draw_slope(_config(gamma=(2.0, 2.0)), 0, 4.0) == (2.0, 0.5)


def test_draw_slope_distribution():
    config = _config(seed=9, gamma=(0.5, 5.0))
    draws = np.array([draw_slope(config, 0, 1.0)[0] for _ in range(100_000)])
    assert draws.min() >= 0.5 and draws.max() <= 5.0
    assert draws.mean() == pytest.approx(2.75, abs=0.02)


# --------------------------------------------------------------------------- leaf weights

def test_leaf_weights_disjoint_indicators_give_group_means():
    x = np.arange(10.0)
    targets = np.where(x > 4.5, 3.0 + x / 10, -1.0 - x / 10)
    upper, lower = transition(x, 1e6, 4.5)
    beta_left, beta_right, sse = solve_leaf_weights(np.column_stack([upper, lower]), np.zeros(10), targets)
    assert beta_left == pytest.approx(targets[x > 4.5].mean(), abs=1e-8)
    assert beta_right == pytest.approx(targets[x < 4.5].mean(), abs=1e-8)
    expected = np.sum((targets[x > 4.5] - beta_left) ** 2) + np.sum((targets[x < 4.5] - beta_right) ** 2)
    assert sse == pytest.approx(expected, rel=1e-10)


def test_leaf_weights_when_offset_explains_targets():
    rng = np.random.default_rng(2)
    weights = rng.uniform(size=(20, 2))
    offset = rng.normal(size=20)
    assert solve_leaf_weights(weights, offset, offset.copy()) == (0.0, 0.0, 0.0)


def test_leaf_weights_match_least_squares():
    rng = np.random.default_rng(3)
    weights = rng.uniform(size=(20, 2))
    offset, targets = rng.normal(size=20), rng.normal(size=20)
    beta_left, beta_right, sse = solve_leaf_weights(weights, offset, targets)
    solution, *_ = np.linalg.lstsq(weights, targets - offset, rcond=None)
    np.testing.assert_allclose([beta_left, beta_right], solution, rtol=1e-6)
    assert sse == pytest.approx(np.sum((targets - offset - weights @ solution) ** 2), rel=1e-8)


def test_leaf_weights_degenerate_columns():
    with pytest.raises(DegenerateCandidateError):
        solve_leaf_weights(np.zeros((5, 2)), np.zeros(5), np.ones(5))


def test_leaf_weights_reject_negative_bases():
    with pytest.raises(InvalidArgumentError):
        solve_leaf_weights(-np.ones((3, 2)), np.zeros(3), np.zeros(3))


# --------------------------------------------------------------------------- split search

def test_search_matches_exhaustive_enumeration():
    rng = np.random.default_rng(4)
    data = Dataset.from_arrays(rng.normal(size=(30, 1)), rng.normal(size=30))
    targets = data.response
    grid = np.array([-0.5, 0.1, 0.7])
    state = GrowthState.start(data.n_rows, float(targets.mean()))
    best = search_best_split(state, data, targets, _config(gamma=(2.0, 2.0)), {0: grid})

    slope = 2.0 / data.column_sd[0]
    scores = []
    for c in grid:
        upper, lower = transition(data.covariates[:, 0], slope, c)
        scores.append(solve_leaf_weights(np.column_stack([upper, lower]), np.zeros(30), targets)[2])
    assert best.location == grid[int(np.argmin(scores))]
    assert best.sse == pytest.approx(min(scores), rel=1e-10)


def test_step_data_is_fitted_exactly():
    x = np.linspace(-1, 1, 40)
    data = Dataset.from_arrays(x[:, None], (x > 0).astype(float))
    best = search_best_split(
        GrowthState.start(40, 0.5), data, data.response, _config(gamma=(1e6, 1e6))
    )
    assert best.sse < 1e-12


def test_sse_never_increases_across_splits(cosine_sim):
    data = cosine_sim.dataset
    config = _config(seed=5, gamma=(0.5, 5.0), fraction=0.5)
    state = GrowthState.start(data.n_rows, float(data.response.mean()))
    previous = float(np.sum((data.response - state.fitted()) ** 2))
    for _ in range(6):
        candidate = search_best_split(state, data, data.response, config)
        state.apply(candidate, data)
        sse = float(np.sum((data.response - state.fitted()) ** 2))
        assert sse == pytest.approx(candidate.sse, rel=1e-8)
        assert sse <= previous * (1 + 1e-10)
        previous = sse


def test_search_without_eligible_columns():
    data = Dataset.from_arrays(np.ones((5, 2)), np.arange(5.0))
    with pytest.raises(DegenerateDataError):
        search_best_split(GrowthState.start(5), data, data.response, _config())


# --------------------------------------------------------------------------- grow_tree

def test_constant_targets():
    rng = np.random.default_rng(6)
    data = Dataset.from_arrays(rng.normal(size=(25, 2)), np.full(25, 3.0))
    tree = grow_tree(data, data.response, _config(splits=3, gamma=(0.5, 5.0)))
    np.testing.assert_allclose(tree_predict(tree, data.covariates), 3.0, atol=1e-8)

    stump = grow_tree(data, data.response, _config(gamma=(0.5, 5.0)))
    np.testing.assert_allclose(stump.weights, 3.0, atol=1e-8)


def test_two_point_hard_split():
    data = Dataset.from_arrays([[0.0], [10.0]], [0.0, 1.0])
    tree = grow_tree(data, data.response, _config(gamma=(1e6, 1e6)))
    (root,) = tree.parents
    assert root.location == 5.0
    left, right = tree.leaves
    # left child carries L, which is ~1 above the location
    assert left.weight == pytest.approx(1.0, abs=1e-8)
    assert right.weight == pytest.approx(0.0, abs=1e-8)


def test_grown_tree_structure(cosine_sim):
    data = cosine_sim.dataset
    tree = grow_tree(data, data.response, _config(seed=1, splits=5, gamma=(0.5, 5.0)))
    assert len(tree.parents) == 5
    assert len(tree.leaves) == 6
    for node in tree.parents:
        assert node.slope == pytest.approx(node.raw_gamma / data.column_sd[node.variable])
        assert 0.5 <= node.raw_gamma <= 5.0


def test_growth_is_deterministic_and_thread_independent(cosine_sim):
    data = cosine_sim.dataset
    first = grow_tree(data, data.response, _config(seed=8, splits=4, gamma=(0.5, 5.0)))
    second = grow_tree(data, data.response, _config(seed=8, splits=4, gamma=(0.5, 5.0)))
    threaded = grow_tree(data, data.response, _config(seed=8, splits=4, gamma=(0.5, 5.0), n_jobs=2))
    assert first == second
    assert first == threaded


def test_hard_split_matches_cart_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n, m = int(rng.integers(5, 51)), int(rng.integers(1, 4))
        # values on a 0.05 grid keep every point far from the midpoints
        covariates = rng.integers(0, 40, size=(n, m)) * 0.05
        targets = rng.normal(size=n)
        data = Dataset.from_arrays(covariates, targets)
        if data.eligible_columns.size == 0:
            continue
        tree = grow_tree(data, targets, _config(gamma=(1e6, 1e6), grid=1000))
        assert _sse(tree, data, targets) == pytest.approx(
            _cart_sse(covariates[:, data.eligible_columns], targets), rel=1e-8, abs=1e-8
        )


def test_single_tree_on_cubic_fits_the_level(cubic_sim):
    data = cubic_sim.dataset
    tree = grow_tree(data, data.response, _config(seed=2, splits=4, gamma=(0.5, 5.0)))
    assert signal_r2(cubic_sim.truth, tree_predict(tree, data.covariates)) > 0.3


def test_grow_tree_argument_checks():
    data = Dataset.from_arrays([[1.0]], [1.0])
    with pytest.raises(InvalidArgumentError):
        grow_tree(data, data.response, _config())
    data = Dataset.from_arrays([[1.0], [2.0]], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        grow_tree(data, np.zeros(3), _config())
