"""
Model Core - data types and the pure math of smooth transition regression trees.

A smooth tree replaces every hard split with a logistic transition, so each
point belongs to every leaf with a soft weight (its leaf basis) and the
weights over all leaves sum to one. Everything here is immutable and safe to
share across threads.
"""

from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .constants import EXP_CLAMP, SD_TOLERANCE

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Path codes: off the path, right child on the path (1 - L), left child on the path (L)
OFF_PATH, RIGHT_CHILD, LEFT_CHILD = -1, 0, 1


class SmoothBoostError(Exception):
    """Base class for every error raised by smoothboost."""


class InvalidArgumentError(SmoothBoostError, ValueError):
    pass


class DegenerateDataError(SmoothBoostError):
    """No usable split candidate exists for the data at hand."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


def column_sd(covariates: np.ndarray) -> np.ndarray:
    """Sample standard deviation of each column (ddof=1, or 0 for a single row)."""
    ddof = 1 if covariates.shape[0] > 1 else 0
    return covariates.std(axis=0, ddof=ddof)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariate matrix, response vector and per-column metadata."""
    covariates: np.ndarray          # N x m
    response: np.ndarray            # N
    column_names: Tuple[str, ...]
    column_sd: np.ndarray           # m
    target_name: Optional[str] = None

    def __post_init__(self):
        covariates = np.array(self.covariates, dtype=float)
        response = np.array(self.response, dtype=float)

        if covariates.ndim != 2 or covariates.shape[0] < 1 or covariates.shape[1] < 1:
            raise InvalidArgumentError("covariates must be an N x m matrix with N >= 1 and m >= 1")
        n_rows, n_features = covariates.shape
        if response.shape != (n_rows,):
            raise InvalidArgumentError(
                f"response has shape {response.shape}, expected ({n_rows},)"
            )
        if not np.all(np.isfinite(covariates)) or not np.all(np.isfinite(response)):
            raise InvalidArgumentError("dataset contains non-finite entries")

        names = tuple(str(name) for name in self.column_names)
        if len(names) != n_features:
            raise InvalidArgumentError(f"{len(names)} column names given for {n_features} columns")
        if len(set(names)) != n_features:
            raise InvalidArgumentError(f"duplicate column names: {names}")
        if self.target_name is not None and str(self.target_name) in names:
            raise InvalidArgumentError(f"target {self.target_name!r} is also a covariate")

        sd = np.array(self.column_sd, dtype=float)
        expected = column_sd(covariates)
        if sd.shape != (n_features,) or not np.allclose(
            sd, expected, rtol=SD_TOLERANCE, atol=SD_TOLERANCE
        ):
            raise InvalidArgumentError(
                "column_sd must equal the sample standard deviation of each column"
            )

        for array in (covariates, response, sd):
            array.setflags(write=False)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "column_sd", sd)
        if self.target_name is not None:
            object.__setattr__(self, "target_name", str(self.target_name))

    @classmethod
    def from_arrays(
        cls,
        covariates: np.ndarray,
        response: np.ndarray,
        column_names: Optional[Sequence[str]] = None,
        target_name: Optional[str] = None,
    ) -> "Dataset":
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if column_names is None:
            column_names = [f"x{s + 1}" for s in range(covariates.shape[1])]
        return cls(covariates, response, tuple(column_names), column_sd(covariates), target_name)

    @property
    def n_rows(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    @property
    def eligible_columns(self) -> np.ndarray:
        """Columns that may carry a split (zero-variance columns never do)."""
        return np.flatnonzero(self.column_sd > 0)

    def subset(self, rows: Iterable[int]) -> "Dataset":
        rows = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows)
        return Dataset.from_arrays(
            self.covariates[rows], self.response[rows], self.column_names, self.target_name
        )


def resolve_variable(column_names: Sequence[str], variable: Union[int, str]) -> int:
    """Map a column name (or an integer index, possibly given as text) to an index."""
    if isinstance(variable, str):
        if variable in column_names:
            return list(column_names).index(variable)
        try:
            variable = int(variable)
        except ValueError:
            raise InvalidArgumentError(
                f"unknown covariate {variable!r}; known: {', '.join(column_names)}"
            ) from None
    if not 0 <= int(variable) < len(column_names):
        raise InvalidArgumentError(
            f"covariate index {variable} out of range for {len(column_names)} columns"
        )
    return int(variable)


@dataclass(frozen=True)
class SplitNode:
    """A parent node: logistic transition on one covariate."""
    position: int
    variable: int
    location: float
    slope: float        # effective slope, raw_gamma / sd of the variable
    raw_gamma: float

    def __post_init__(self):
        object.__setattr__(self, "position", int(self.position))
        object.__setattr__(self, "variable", int(self.variable))
        object.__setattr__(self, "location", float(self.location))
        object.__setattr__(self, "slope", float(self.slope))
        object.__setattr__(self, "raw_gamma", float(self.raw_gamma))

        if self.position < 0 or self.variable < 0:
            raise InvalidArgumentError(f"split node {self.position}: negative position or variable")
        if not np.isfinite(self.location):
            raise InvalidArgumentError(f"split node {self.position}: location must be finite")
        if not (np.isfinite(self.slope) and self.slope > 0):
            raise InvalidArgumentError(f"split node {self.position}: slope must be > 0")
        if not (np.isfinite(self.raw_gamma) and self.raw_gamma > 0):
            raise InvalidArgumentError(f"split node {self.position}: raw_gamma must be > 0")


@dataclass(frozen=True)
class Leaf:
    """A terminal node with its weight and the path code for every parent."""
    position: int
    weight: float
    path_codes: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "position", int(self.position))
        object.__setattr__(self, "weight", float(self.weight))
        codes = {int(j): int(code) for j, code in sorted(self.path_codes.items())}
        if any(code not in (OFF_PATH, RIGHT_CHILD, LEFT_CHILD) for code in codes.values()):
            raise InvalidArgumentError(f"leaf {self.position}: path codes must be -1, 0 or 1")
        if not np.isfinite(self.weight):
            raise InvalidArgumentError(f"leaf {self.position}: weight must be finite")
        object.__setattr__(self, "path_codes", MappingProxyType(codes))

    @property
    def path(self) -> Tuple[int, ...]:
        """Parents on the path from the root to this leaf."""
        return tuple(j for j, code in self.path_codes.items() if code != OFF_PATH)


def ancestor_codes(position: int) -> Dict[int, int]:
    """Path codes of the ancestors of `position` under the 2j+1 / 2j+2 child rule."""
    codes = {}
    child = position
    while child > 0:
        parent = (child - 1) // 2
        codes[parent] = LEFT_CHILD if child == 2 * parent + 1 else RIGHT_CHILD
        child = parent
    return codes


def path_codes_for(position: int, parent_positions: Iterable[int]) -> Dict[int, int]:
    on_path = ancestor_codes(position)
    return {j: on_path.get(j, OFF_PATH) for j in sorted(parent_positions)}


def path_exponents(code: int) -> Tuple[int, int]:
    """Exponents of (L, 1 - L) contributed by a parent with the given path code."""
    if code not in (OFF_PATH, RIGHT_CHILD, LEFT_CHILD):
        raise InvalidArgumentError(f"path code must be -1, 0 or 1, got {code}")
    return code * (1 + code) // 2, (1 - code) * (1 + code)


@dataclass(frozen=True)
class SmoothTree:
    parents: Tuple[SplitNode, ...]
    leaves: Tuple[Leaf, ...]

    def __post_init__(self):
        parents = tuple(sorted(self.parents, key=lambda node: node.position))
        leaves = tuple(sorted(self.leaves, key=lambda leaf: leaf.position))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "leaves", leaves)
        self._check_structure()

    def _check_structure(self):
        parent_positions = [node.position for node in self.parents]
        leaf_positions = [leaf.position for leaf in self.leaves]
        parent_set, leaf_set = set(parent_positions), set(leaf_positions)

        if len(parent_set) != len(parent_positions) or len(leaf_set) != len(leaf_positions):
            raise InvalidArgumentError("tree has duplicate node positions")
        if parent_set & leaf_set:
            raise InvalidArgumentError("a node cannot be both a parent and a leaf")
        if len(leaf_positions) != len(parent_positions) + 1:
            raise InvalidArgumentError(
                f"tree needs |leaves| = |parents| + 1, got {len(leaf_positions)} and {len(parent_positions)}"
            )
        if 0 not in parent_set | leaf_set:
            raise InvalidArgumentError("tree has no root at position 0")

        for position in parent_positions + leaf_positions:
            if position > 0 and (position - 1) // 2 not in parent_set:
                raise InvalidArgumentError(f"node {position} has no parent in the tree")
        for j in parent_positions:
            for child in (2 * j + 1, 2 * j + 2):
                if child not in parent_set | leaf_set:
                    raise InvalidArgumentError(f"parent {j} is missing child {child}")
        for leaf in self.leaves:
            if dict(leaf.path_codes) != path_codes_for(leaf.position, parent_positions):
                raise InvalidArgumentError(f"leaf {leaf.position} has inconsistent path codes")

    @classmethod
    def from_splits(cls, parents: Iterable[SplitNode], weights: Mapping[int, float]) -> "SmoothTree":
        """Build a tree from its parents and the weight of every terminal position."""
        parents = tuple(parents)
        positions = [node.position for node in parents]
        leaves = tuple(
            Leaf(position, weight, path_codes_for(position, positions))
            for position, weight in sorted(weights.items())
        )
        return cls(parents, leaves)

    @property
    def variables(self) -> frozenset:
        """Covariates used by at least one split."""
        return frozenset(node.variable for node in self.parents)

    @property
    def weights(self) -> np.ndarray:
        return np.array([leaf.weight for leaf in self.leaves])


class Stage(NamedTuple):
    rho: float
    tree: SmoothTree


@dataclass(frozen=True)
class BoostEnsemble:
    """Baseline plus shrunken, line-searched smooth trees."""
    baseline: float
    shrinkage: float
    stages: Tuple[Stage, ...]
    column_names: Tuple[str, ...]
    column_sd: Tuple[float, ...]
    # response column of the training file; dropped from feature files at predict time
    target_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "baseline", float(self.baseline))
        object.__setattr__(self, "shrinkage", float(self.shrinkage))
        object.__setattr__(self, "stages", tuple(Stage(float(rho), tree) for rho, tree in self.stages))
        object.__setattr__(self, "column_names", tuple(str(name) for name in self.column_names))
        object.__setattr__(self, "column_sd", tuple(float(sd) for sd in self.column_sd))

        if not np.isfinite(self.baseline):
            raise InvalidArgumentError("baseline must be finite")
        if not 0 < self.shrinkage <= 1:
            raise InvalidArgumentError("shrinkage ∈ (0,1]")
        if len(self.column_names) != len(self.column_sd) or not self.column_names:
            raise InvalidArgumentError("column metadata must name every covariate once")
        if self.target_name is not None:
            object.__setattr__(self, "target_name", str(self.target_name))
            if self.target_name in self.column_names:
                raise InvalidArgumentError(f"target {self.target_name!r} is also a covariate")
        for index, stage in enumerate(self.stages, start=1):
            if not np.isfinite(stage.rho):
                raise InvalidArgumentError(f"stage {index}: rho must be finite")
            for node in stage.tree.parents:
                self._check_node(index, node)

    def _check_node(self, index: int, node: SplitNode):
        if node.variable >= len(self.column_sd):
            raise InvalidArgumentError(
                f"stage {index}: split on covariate {node.variable} but the model has {len(self.column_sd)}"
            )
        sd = self.column_sd[node.variable]
        if sd <= 0:
            raise InvalidArgumentError(
                f"stage {index}: split on zero-variance covariate {self.column_names[node.variable]!r}"
            )
        if not np.isclose(node.slope, node.raw_gamma / sd, rtol=SD_TOLERANCE, atol=0.0):
            raise InvalidArgumentError(
                f"stage {index}: slope must equal raw_gamma / column_sd at node {node.position}"
            )

    @property
    def n_features(self) -> int:
        return len(self.column_names)

    @property
    def num_stages(self) -> int:
        return len(self.stages)


def as_points(points: ArrayLike, n_features: Optional[int] = None) -> Tuple[np.ndarray, bool]:
    """Return (n x m matrix, was_single_point); validates width and finiteness."""
    matrix = np.asarray(points, dtype=float)
    single = matrix.ndim == 1
    if single:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"points must be a vector or a matrix, got {matrix.ndim} dimensions")
    if n_features is not None and matrix.shape[1] != n_features:
        raise InvalidArgumentError(
            f"points have {matrix.shape[1]} covariates, the model expects {n_features}"
        )
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError("points contain non-finite values")
    return matrix, single


def check_width(tree: SmoothTree, matrix: np.ndarray):
    if tree.parents and max(tree.variables) >= matrix.shape[1]:
        raise InvalidArgumentError(
            f"tree splits on covariate {max(tree.variables)} but points have {matrix.shape[1]}"
        )


def transition(x: np.ndarray, slope: ArrayLike, location: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """L and 1 - L, unvalidated; exponent clamped at ±EXP_CLAMP and saturated exactly."""
    z = np.clip(slope * (x - location), -EXP_CLAMP, EXP_CLAMP)
    upper = np.where(z <= -EXP_CLAMP, 0.0, expit(z))
    lower = np.where(z >= EXP_CLAMP, 0.0, expit(-z))
    return upper, lower


def _validated(x: ArrayLike, slope: ArrayLike, location: ArrayLike):
    x, slope, location = (np.asarray(v, dtype=float) for v in (x, slope, location))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(slope)) and np.all(np.isfinite(location))):
        raise InvalidArgumentError("logistic arguments must be finite")
    if np.any(slope <= 0):
        raise InvalidArgumentError("logistic slope must be > 0")
    return x, slope, location


def _unwrap(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def logistic(x: ArrayLike, slope: ArrayLike, location: ArrayLike):
    """1 / (1 + exp(-slope * (x - location)))."""
    upper, _ = transition(*_validated(x, slope, location))
    return _unwrap(upper)


def logistic_derivative(x: ArrayLike, slope: ArrayLike, location: ArrayLike):
    """slope * L * (1 - L); peaks at slope / 4 when x == location."""
    x, slope, location = _validated(x, slope, location)
    upper, lower = transition(x, slope, location)
    return _unwrap(slope * upper * lower)


def leaf_basis(tree: SmoothTree, leaf: Leaf, point: ArrayLike):
    """Soft membership of the point(s) in one leaf, straight from the path codes."""
    if leaf not in tree.leaves:
        raise InvalidArgumentError(f"leaf {leaf.position} does not belong to this tree")
    matrix, single = as_points(point)
    check_width(tree, matrix)

    basis = np.ones(matrix.shape[0])
    for node in tree.parents:
        l_power, r_power = path_exponents(leaf.path_codes[node.position])
        if l_power == 0 and r_power == 0:
            continue
        upper, lower = transition(matrix[:, node.variable], node.slope, node.location)
        basis = basis * (upper if l_power else lower)
    return float(basis[0]) if single else basis


def leaf_basis_matrix(tree: SmoothTree, points: ArrayLike) -> np.ndarray:
    """All leaf bases at once (n x |leaves|), propagated from the root down."""
    matrix, _ = as_points(points)
    check_width(tree, matrix)

    bases = {0: np.ones(matrix.shape[0])}
    # parents are sorted by position, so a parent is always visited before its children
    for node in tree.parents:
        upper, lower = transition(matrix[:, node.variable], node.slope, node.location)
        base = bases.pop(node.position)
        bases[2 * node.position + 1] = base * upper
        bases[2 * node.position + 2] = base * lower
    return np.column_stack([bases[leaf.position] for leaf in tree.leaves])


def tree_predict(tree: SmoothTree, points: ArrayLike):
    """Sum of leaf weights times leaf bases."""
    matrix, single = as_points(points)
    values = leaf_basis_matrix(tree, matrix) @ tree.weights
    return float(values[0]) if single else values


def ensemble_predict(model: BoostEnsemble, points: ArrayLike) -> np.ndarray:
    """baseline + sum of shrinkage * rho * tree prediction, one value per row."""
    matrix, _ = as_points(points, model.n_features)
    predictions = np.full(matrix.shape[0], model.baseline)
    for stage in model.stages:
        predictions = predictions + model.shrinkage * stage.rho * tree_predict(stage.tree, matrix)
    return predictions
