"""
Tree Grower - sequential growth of one smooth transition regression tree.

Each step picks the (terminal node, covariate, location) triple whose new pair
of leaf weights gives the smallest sum of squared errors of the whole tree,
with every other leaf weight held fixed. Unlike a hard tree, every split
changes the fit everywhere, so all terminal nodes are searched at every step.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .constants import RIDGE
from .model import (
    Dataset,
    DegenerateDataError,
    InvalidArgumentError,
    SmoothBoostError,
    SmoothTree,
    SplitNode,
    transition,
)

logger = logging.getLogger(__name__)


class DegenerateCandidateError(SmoothBoostError):
    """The 2x2 leaf-weight system of one candidate is singular; the candidate is skipped."""


@dataclass
class GrowthConfig:
    splits: int
    gamma_range: Tuple[float, float]
    variable_fraction: float
    threshold_grid: int
    rng: np.random.Generator
    n_jobs: int = 1  # joblib convention, -1 = all cores

    def __post_init__(self):
        low, high = self.gamma_range
        if self.splits < 1:
            raise InvalidArgumentError("splits must be >= 1")
        if not 0 < low <= high:
            raise InvalidArgumentError("gamma_range requires 0 < γ_min ≤ γ_max")
        if not 0 < self.variable_fraction <= 1:
            raise InvalidArgumentError("variable_fraction ∈ (0,1]")
        if self.threshold_grid < 1:
            raise InvalidArgumentError("threshold_grid must be >= 1")
        if self.n_jobs == 0:
            raise InvalidArgumentError("n_jobs must be nonzero")


@dataclass(frozen=True)
class SplitCandidate:
    node: int
    variable: int
    location: float
    slope: float
    raw_gamma: float
    beta_left: float
    beta_right: float
    sse: float

    @property
    def sort_key(self) -> Tuple[float, int, int, float]:
        return (self.sse, self.node, self.variable, self.location)


@dataclass
class GrowthState:
    """A partially grown tree: its parents and the basis and weight of each terminal node."""
    n_rows: int
    parents: List[SplitNode] = field(default_factory=list)
    bases: Dict[int, np.ndarray] = field(default_factory=dict)
    weights: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def start(cls, n_rows: int, root_weight: float = 0.0) -> "GrowthState":
        return cls(n_rows, bases={0: np.ones(n_rows)}, weights={0: float(root_weight)})

    @property
    def terminals(self) -> List[int]:
        return sorted(self.bases)

    def fitted(self) -> np.ndarray:
        total = np.zeros(self.n_rows)
        for position in self.terminals:
            total = total + self.weights[position] * self.bases[position]
        return total

    def apply(self, candidate: SplitCandidate, data: Dataset):
        j = candidate.node
        upper, lower = transition(
            data.covariates[:, candidate.variable], candidate.slope, candidate.location
        )
        basis = self.bases.pop(j)
        del self.weights[j]
        self.bases[2 * j + 1] = basis * upper
        self.bases[2 * j + 2] = basis * lower
        self.weights[2 * j + 1] = candidate.beta_left
        self.weights[2 * j + 2] = candidate.beta_right
        self.parents.append(
            SplitNode(j, candidate.variable, candidate.location, candidate.slope, candidate.raw_gamma)
        )

    def to_tree(self) -> SmoothTree:
        return SmoothTree.from_splits(self.parents, self.weights)


def candidate_locations(column: np.ndarray, threshold_grid: int) -> np.ndarray:
    """
    Candidate split locations for one covariate.

    Midpoints between consecutive distinct values of the column, or of
    threshold_grid + 1 equally spaced empirical quantiles when the column has
    more distinct values than that. Never more than threshold_grid candidates.
    """
    values = np.unique(column)
    if values.size > threshold_grid + 1:
        values = np.unique(np.quantile(column, np.linspace(0.0, 1.0, threshold_grid + 1)))
    return (values[:-1] + values[1:]) / 2.0


def threshold_candidates(data: Dataset, threshold_grid: int) -> Dict[int, np.ndarray]:
    """Location grid of every split-eligible covariate."""
    return {
        int(s): candidate_locations(data.covariates[:, s], threshold_grid)
        for s in data.eligible_columns
    }


def draw_slope(config: GrowthConfig, variable: int, column_sd: float) -> Tuple[float, float]:
    """Draw a raw gamma uniformly from the configured range; return it with the sd-scaled slope."""
    low, high = config.gamma_range
    raw_gamma = float(config.rng.uniform(low, high))
    logger.debug("covariate %d: gamma %.4f (sd %.4g)", variable, raw_gamma, column_sd)
    return raw_gamma, raw_gamma / column_sd


def _solve_pairs(left: np.ndarray, right: np.ndarray, residual: np.ndarray):
    """
    Ridged 2x2 least squares for many column pairs at once.

    left, right: N x G weight columns; residual: N. Returns beta_left,
    beta_right, sse (inf where degenerate) and the usable mask, each of length G.
    """
    a = np.einsum("ij,ij->j", left, left)
    b = np.einsum("ij,ij->j", left, right)
    d = np.einsum("ij,ij->j", right, right)
    e = np.einsum("i,ij->j", residual, left)
    f = np.einsum("i,ij->j", residual, right)

    a_ridge, d_ridge = a + RIDGE, d + RIDGE
    det = a_ridge * d_ridge - b * b
    usable = (a + d > 0) & np.isfinite(det) & (det > 0)
    det = np.where(usable, det, 1.0)

    beta_left = (d_ridge * e - b * f) / det
    beta_right = (a_ridge * f - b * e) / det
    errors = residual[:, None] - left * beta_left - right * beta_right
    sse = np.where(usable, np.einsum("ij,ij->j", errors, errors), np.inf)
    return beta_left, beta_right, sse, usable


def solve_leaf_weights(
    weighted_bases: np.ndarray, offset: np.ndarray, targets: np.ndarray
) -> Tuple[float, float, float]:
    """
    Least-squares weights of the two new leaves.

    weighted_bases holds the columns [L * B_j, (1 - L) * B_j] of the node being
    split; offset is the fixed contribution of every other leaf.
    Raises DegenerateCandidateError when the system is singular.
    """
    weighted_bases = np.asarray(weighted_bases, dtype=float)
    offset = np.asarray(offset, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if weighted_bases.ndim != 2 or weighted_bases.shape[1] != 2:
        raise InvalidArgumentError("weighted_bases must be an N x 2 matrix")
    if offset.shape != targets.shape or targets.shape != (weighted_bases.shape[0],):
        raise InvalidArgumentError("offset and targets must match the rows of weighted_bases")
    if not np.all(np.isfinite(offset)):
        raise InvalidArgumentError("offset must be finite")
    if np.any(weighted_bases < 0):
        raise InvalidArgumentError("weighted bases must be nonnegative")

    beta_left, beta_right, sse, usable = _solve_pairs(
        weighted_bases[:, :1], weighted_bases[:, 1:], targets - offset
    )
    if not usable[0]:
        raise DegenerateCandidateError("both weight columns vanish; candidate skipped")
    return float(beta_left[0]), float(beta_right[0]), float(sse[0])


def _evaluate_variable(variable, raw_gamma, slope, locations, column, residuals):
    """Best candidate of each terminal node for one covariate and its drawn slope."""
    upper, lower = transition(column[:, None], slope, locations[None, :])
    best = []
    for position, basis, residual in residuals:
        beta_left, beta_right, sse, usable = _solve_pairs(
            basis[:, None] * upper, basis[:, None] * lower, residual
        )
        if not usable.any():
            continue
        # locations ascend, so argmin's first hit is the lowest location among ties
        k = int(np.argmin(sse))
        best.append(SplitCandidate(
            node=position,
            variable=variable,
            location=float(locations[k]),
            slope=slope,
            raw_gamma=raw_gamma,
            beta_left=float(beta_left[k]),
            beta_right=float(beta_right[k]),
            sse=float(sse[k]),
        ))
    return best


def search_best_split(
    state: GrowthState,
    data: Dataset,
    targets: np.ndarray,
    config: GrowthConfig,
    locations: Optional[Mapping[int, np.ndarray]] = None,
) -> SplitCandidate:
    """
    Best split over all terminal nodes, a random subset of covariates and the threshold grid.

    The covariate subset and one slope per covariate are drawn serially up front;
    evaluation may then run in parallel and the reduction breaks ties by
    (sse, node, variable, location), so the answer never depends on n_jobs.
    """
    eligible = data.eligible_columns
    if eligible.size == 0:
        raise DegenerateDataError("no covariate has positive variance")
    if locations is None:
        locations = threshold_candidates(data, config.threshold_grid)

    n_vars = max(1, math.ceil(config.variable_fraction * eligible.size - 1e-9))
    variables = np.sort(config.rng.choice(eligible, size=n_vars, replace=False))
    draws = [draw_slope(config, int(s), float(data.column_sd[s])) for s in variables]

    fitted = state.fitted()
    residuals = [
        (position, state.bases[position], targets - (fitted - state.weights[position] * state.bases[position]))
        for position in state.terminals
    ]
    tasks = [
        (int(s), raw_gamma, slope, locations[int(s)], data.covariates[:, s], residuals)
        for s, (raw_gamma, slope) in zip(variables, draws)
    ]

    if config.n_jobs == 1 or len(tasks) == 1:
        batches = [_evaluate_variable(*task) for task in tasks]
    else:
        batches = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_evaluate_variable)(*task) for task in tasks
        )

    candidates = [candidate for batch in batches for candidate in batch]
    if not candidates:
        raise DegenerateDataError("every split candidate is degenerate")
    return min(candidates, key=lambda candidate: candidate.sort_key)


def grow_tree(
    data: Dataset,
    targets: np.ndarray,
    config: GrowthConfig,
    locations: Optional[Mapping[int, np.ndarray]] = None,
) -> SmoothTree:
    """
    Grow one smooth transition tree on the current residuals.

    Args:
        data: training covariates and column metadata
        targets: values to fit, one per row (the boosting residuals)
        config: split count, slope range, variable subsample and random stream
        locations: precomputed threshold candidates per column; computed from data when omitted

    Returns:
        A tree with exactly config.splits parents and config.splits + 1 leaves

    Raises DegenerateDataError when no eligible column offers a usable split.
    """
    targets = np.asarray(targets, dtype=float)
    if data.n_rows < 2:
        raise InvalidArgumentError("growing a tree needs at least 2 rows")
    if targets.shape != (data.n_rows,):
        raise InvalidArgumentError(f"targets have shape {targets.shape}, expected ({data.n_rows},)")
    if not np.all(np.isfinite(targets)):
        raise InvalidArgumentError("targets must be finite")
    if locations is None:
        locations = threshold_candidates(data, config.threshold_grid)

    state = GrowthState.start(data.n_rows, float(np.mean(targets)))
    for step in range(config.splits):
        candidate = search_best_split(state, data, targets, config, locations)
        logger.debug(
            "split %d: node %d on %s at %.4g (slope %.4g), sse %.6g",
            step + 1, candidate.node, data.column_names[candidate.variable],
            candidate.location, candidate.slope, candidate.sse,
        )
        state.apply(candidate, data)
    return state.to_tree()
