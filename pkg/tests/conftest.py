"""Shared fixtures: random smooth trees and ensembles, small simulated datasets."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from smoothboost.booster import Hyperparameters
from smoothboost.model import BoostEnsemble, SmoothTree, SplitNode, Stage
from smoothboost.simgen import SimSpec, generate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size fits, sweeps and cross-validation")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def _left_first(position, parents):
    """Terminal positions under `position`, left subtree before right."""
    if position not in parents:
        return [position]
    return _left_first(2 * position + 1, parents) + _left_first(2 * position + 2, parents)


def random_tree(rng, splits, n_features, gamma=(0.5, 2.0), monotone=False):
    """
    Random tree on unit-sd covariates with locations in [-1, 1].

    monotone=True puts the root on covariate 0 and ranks leaf weights so every
    left subtree outweighs its right sibling, which makes the tree strictly
    increasing in covariate 0.
    """
    terminals = [0]
    parents = {}
    for step in range(splits):
        j = terminals.pop(int(rng.integers(len(terminals))))
        variable = 0 if (monotone and step == 0) else int(rng.integers(n_features))
        raw_gamma = float(rng.uniform(*gamma))
        parents[j] = SplitNode(j, variable, float(rng.uniform(-1, 1)), raw_gamma, raw_gamma)
        terminals += [2 * j + 1, 2 * j + 2]

    if monotone:
        order = _left_first(0, parents)
        values = np.sort(rng.uniform(-3, 3, len(order)))[::-1]
        weights = dict(zip(order, values))
    else:
        weights = {position: float(rng.normal()) for position in terminals}
    return SmoothTree.from_splits(parents.values(), weights)


def random_ensemble(rng, num_trees, n_features, splits=4, monotone=False):
    stages = tuple(
        Stage(float(rng.uniform(0.2, 1.5)), random_tree(rng, splits, n_features, monotone=monotone))
        for _ in range(num_trees)
    )
    return BoostEnsemble(
        baseline=float(rng.normal()),
        shrinkage=0.2,
        stages=stages,
        column_names=tuple(f"x{s + 1}" for s in range(n_features)),
        column_sd=(1.0,) * n_features,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_tree():
    return random_tree


@pytest.fixture
def make_ensemble():
    return random_ensemble


@pytest.fixture(scope="session")
def cosine_sim():
    return generate(SimSpec(dgp="cosine", n=200, target_r2=0.9, seed=11))


@pytest.fixture(scope="session")
def cubic_sim():
    return generate(SimSpec(dgp="cubic", n=150, target_r2=0.8, seed=5))


@pytest.fixture
def small_params():
    return Hyperparameters(num_trees=15, splits_per_tree=3, threshold_grid=20, seed=3)
