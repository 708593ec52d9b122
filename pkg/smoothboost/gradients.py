"""
Gradients - analytical partial effects of smooth trees and boosted ensembles.

Because every split is a logistic transition, the fitted function is
differentiable everywhere and its derivative with respect to any covariate
has a closed form. Estimates are most reliable where the data are dense;
expect degraded derivatives in the tails of a covariate's distribution.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .model import (
    OFF_PATH,
    LEFT_CHILD,
    ArrayLike,
    BoostEnsemble,
    InvalidArgumentError,
    Leaf,
    SmoothTree,
    as_points,
    check_width,
    ensemble_predict,
    resolve_variable,
    transition,
)


@dataclass(frozen=True, eq=False)
class PartialEffectRequest:
    points: np.ndarray   # n x m
    variable: int

    def __post_init__(self):
        points, _ = as_points(self.points)
        if not 0 <= int(self.variable) < points.shape[1]:
            raise InvalidArgumentError(
                f"variable {self.variable} out of range for {points.shape[1]} covariates"
            )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "variable", int(self.variable))


def _check_variable(variable: int, n_features: int):
    if not 0 <= variable < n_features:
        raise InvalidArgumentError(f"variable {variable} out of range for {n_features} covariates")


def _transition_slope(node, upper, lower, variable):
    """d L / d x_variable at a node: zero unless the node splits on that covariate."""
    if node.variable != variable:
        return np.zeros_like(upper)
    return node.slope * upper * lower


def leaf_basis_partial(tree: SmoothTree, leaf: Leaf, points: ArrayLike, variable: int):
    """
    Derivative of one leaf basis, term by term: for each parent on the path,
    the product of the other factors times the signed logistic derivative.
    """
    if leaf not in tree.leaves:
        raise InvalidArgumentError(f"leaf {leaf.position} does not belong to this tree")
    matrix, single = as_points(points)
    check_width(tree, matrix)
    _check_variable(variable, matrix.shape[1])

    factors = []
    for node in tree.parents:
        code = leaf.path_codes[node.position]
        if code == OFF_PATH:
            continue
        upper, lower = transition(matrix[:, node.variable], node.slope, node.location)
        slope = _transition_slope(node, upper, lower, variable)
        factors.append((upper, slope) if code == LEFT_CHILD else (lower, -slope))

    total = np.zeros(matrix.shape[0])
    for j, (_, derivative) in enumerate(factors):
        others = np.ones(matrix.shape[0])
        for ell, (value, _) in enumerate(factors):
            if ell != j:
                others = others * value
        total = total + others * derivative
    return float(total[0]) if single else total


def tree_partial(tree: SmoothTree, points: ArrayLike, variable: int):
    """d tree(x) / d x_variable, by the product rule propagated from the root."""
    matrix, single = as_points(points)
    check_width(tree, matrix)
    _check_variable(variable, matrix.shape[1])

    bases = {0: np.ones(matrix.shape[0])}
    slopes = {0: np.zeros(matrix.shape[0])}
    for node in tree.parents:
        upper, lower = transition(matrix[:, node.variable], node.slope, node.location)
        d_upper = _transition_slope(node, upper, lower, variable)
        base, d_base = bases.pop(node.position), slopes.pop(node.position)

        left, right = 2 * node.position + 1, 2 * node.position + 2
        bases[left], slopes[left] = base * upper, d_base * upper + base * d_upper
        bases[right], slopes[right] = base * lower, d_base * lower - base * d_upper

    total = np.zeros(matrix.shape[0])
    for leaf in tree.leaves:
        total = total + leaf.weight * slopes[leaf.position]
    return float(total[0]) if single else total


def ensemble_partial(model: BoostEnsemble, request: PartialEffectRequest) -> np.ndarray:
    """Partial effect of the ensemble at each point; the baseline contributes nothing."""
    if request.points.shape[1] != model.n_features:
        raise InvalidArgumentError(
            f"points have {request.points.shape[1]} covariates, the model expects {model.n_features}"
        )
    effects = np.zeros(request.points.shape[0])
    for stage in model.stages:
        effects = effects + model.shrinkage * stage.rho * tree_partial(
            stage.tree, request.points, request.variable
        )
    return effects


def finite_difference_check(
    model: BoostEnsemble, points: ArrayLike, variable: int, step: float = 1e-4
) -> float:
    """Largest relative gap between the analytical and the central-difference derivative."""
    if not step > 0:
        raise InvalidArgumentError("step must be > 0")
    matrix, _ = as_points(points, model.n_features)
    analytical = ensemble_partial(model, PartialEffectRequest(matrix, variable))

    plus, minus = matrix.copy(), matrix.copy()
    plus[:, variable] += step
    minus[:, variable] -= step
    central = (ensemble_predict(model, plus) - ensemble_predict(model, minus)) / (2.0 * step)

    gap = np.abs(analytical - central) / (np.abs(analytical) + np.abs(central) + 1e-12)
    return float(gap.max()) if gap.size else 0.0


def partial_effect_table(
    model: BoostEnsemble,
    points: ArrayLike,
    variable: Union[int, str],
    rows: Optional[Sequence[int]] = None,
) -> pd.DataFrame:
    """Columns: point, every covariate, fitted, partial."""
    matrix, _ = as_points(points, model.n_features)
    index = resolve_variable(model.column_names, variable)

    table = pd.DataFrame(matrix, columns=list(model.column_names))
    table.insert(0, "point", np.arange(len(matrix)) if rows is None else np.asarray(rows))
    table["fitted"] = ensemble_predict(model, matrix)
    table["partial"] = ensemble_partial(model, PartialEffectRequest(matrix, index))
    return table


def representative_point(covariates: ArrayLike) -> np.ndarray:
    """Column medians, used to hold covariates fixed while one of them varies."""
    matrix, _ = as_points(covariates)
    return np.median(matrix, axis=0)


def effect_curve(
    model: BoostEnsemble,
    variable: Union[int, str],
    grid: ArrayLike,
    at: ArrayLike,
    group_variable: Optional[Union[int, str]] = None,
    group_levels: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """
    Fitted value and partial effect along `grid` for one covariate, all others held at `at`.

    With a group variable, one curve is stacked per level (the `group` column).
    """
    index = resolve_variable(model.column_names, variable)
    grid = np.asarray(grid, dtype=float).ravel()
    anchor, _ = as_points(at, model.n_features)
    if grid.size == 0:
        raise InvalidArgumentError("effect curve grid is empty")

    if group_variable is None:
        levels, group_index = [None], None
    else:
        group_index = resolve_variable(model.column_names, group_variable)
        if group_index == index:
            raise InvalidArgumentError("group variable must differ from the curve variable")
        if not group_levels:
            raise InvalidArgumentError("group levels are required with a group variable")
        levels = [float(level) for level in group_levels]

    curves = []
    for level in levels:
        points = np.repeat(anchor, grid.size, axis=0)
        points[:, index] = grid
        if level is not None:
            points[:, group_index] = level
        curve = pd.DataFrame({
            model.column_names[index]: grid,
            "fitted": ensemble_predict(model, points),
            "partial": ensemble_partial(model, PartialEffectRequest(points, index)),
        })
        if level is not None:
            curve.insert(0, "group", level)
        curves.append(curve)
    return pd.concat(curves, ignore_index=True)
