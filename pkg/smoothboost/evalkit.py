"""
Evaluation Kit - RMSE, k-fold cross-validation against benchmark models,
derivative-recovery metrics and hyperparameter convergence sweeps.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy import stats

from .booster import FitReport, Hyperparameters, fit
from .constants import RIDGE
from .gradients import PartialEffectRequest, ensemble_partial
from .model import (
    BoostEnsemble,
    Dataset,
    InvalidArgumentError,
    SmoothBoostError,
    ensemble_predict,
    resolve_variable,
)
from .streams import check_seed, derive_seed, stream

logger = logging.getLogger(__name__)

# CLI sweep names -> Hyperparameters fields
SWEEP_PARAMETERS = {
    "shrinkage": "shrinkage",
    "splits": "splits_per_tree",
    "gamma": "gamma_range",
}


class CrossValidationError(SmoothBoostError):
    def __init__(self, message: str, model: str, fold: int):
        super().__init__(message)
        self.model = model
        self.fold = fold


class ExperimentError(SmoothBoostError):
    def __init__(self, message: str, value: Any):
        super().__init__(message)
        self.value = value


# --------------------------------------------------------------------------- metrics

def rmse(actual, predicted) -> float:
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise InvalidArgumentError(
            f"rmse needs equal lengths, got {actual.shape} and {predicted.shape}"
        )
    if actual.size == 0:
        raise InvalidArgumentError("rmse of empty vectors")
    return float(np.sqrt(np.mean((actual - predicted) ** 2)))


def signal_r2(truth, fitted) -> float:
    """Share of the true signal's variation reproduced by the fitted values."""
    truth = np.asarray(truth, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    total = np.sum((truth - truth.mean()) ** 2)
    if total == 0:
        raise InvalidArgumentError("signal_r2 of a constant signal")
    return float(1.0 - np.sum((truth - fitted) ** 2) / total)


def iterations_to_floor(trace, tolerance: float = 0.01) -> int:
    """First 1-based iteration within `tolerance` (relative) of the trace's own minimum."""
    trace = np.asarray(trace, dtype=float)
    if trace.size == 0:
        raise InvalidArgumentError("empty trace")
    floor = trace.min()
    return int(np.argmax(trace <= floor * (1.0 + tolerance))) + 1


# --------------------------------------------------------------------------- models

@dataclass
class MeanPredictor:
    value: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(covariates).shape[0], self.value)


@dataclass
class LinearPredictor:
    intercept: float
    coefficients: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(covariates, dtype=float) @ self.coefficients


@dataclass
class BoostPredictor:
    model: BoostEnsemble
    metadata: Dict[str, Any] = field(default_factory=dict)

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        return ensemble_predict(self.model, covariates)


@dataclass(frozen=True)
class ModelSpec:
    """A named model: fit(train_data, seed) returns an object with predict() and metadata."""
    name: str
    fit: Callable[[Dataset, int], Any]


def fit_mean(data: Dataset, seed: int = 0) -> MeanPredictor:
    return MeanPredictor(float(np.mean(data.response)))


def fit_ols(data: Dataset, seed: int = 0) -> LinearPredictor:
    """Least squares with intercept via ridged normal equations."""
    design = np.column_stack([np.ones(data.n_rows), data.covariates])
    rank = int(np.linalg.matrix_rank(design))
    gram = design.T @ design + RIDGE * np.eye(design.shape[1])
    solution = np.linalg.solve(gram, design.T @ data.response)
    rank_deficient = rank < design.shape[1]
    if rank_deficient:
        logger.warning("OLS design has rank %d < %d; ridge solution used", rank, design.shape[1])
    return LinearPredictor(
        intercept=float(solution[0]),
        coefficients=solution[1:],
        metadata={"rank_deficient": rank_deficient},
    )


def benchmark_models() -> List[ModelSpec]:
    return [ModelSpec("mean", fit_mean), ModelSpec("ols", fit_ols)]


def boost_model(params: Hyperparameters, name: str = "boost", n_jobs: int = 1) -> ModelSpec:
    """The boosted smooth-tree model; each fold fits with the seed it is handed."""

    def _fit(data: Dataset, seed: int) -> BoostPredictor:
        fold_params = params.model_copy(update={"seed": seed})
        model, report = fit(data, fold_params, n_jobs=n_jobs, progress_every=0)
        return BoostPredictor(model, {"final_rmse": report.final_rmse})

    return ModelSpec(name, _fit)


@dataclass
class TransformedPredictor:
    inner: Any
    feature_transforms: Dict[int, Callable]
    inverse_response: Optional[Callable]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        predictions = self.inner.predict(_apply_transforms(covariates, self.feature_transforms))
        return predictions if self.inverse_response is None else self.inverse_response(predictions)


def _apply_transforms(covariates: np.ndarray, transforms: Mapping[int, Callable]) -> np.ndarray:
    transformed = np.array(covariates, dtype=float)
    for index, transform in transforms.items():
        transformed[:, index] = transform(transformed[:, index])
    return transformed


def transformed_model(
    base: ModelSpec,
    name: str,
    feature_transforms: Optional[Mapping[str, Callable]] = None,
    response_transform: Optional[Tuple[Callable, Callable]] = None,
) -> ModelSpec:
    """
    Wrap a model with user-declared column transforms.

    feature_transforms maps column names to elementwise functions;
    response_transform is a (forward, inverse) pair, the inverse being applied
    to predictions. log features with (log, exp) on the response gives a log-linear model.
    """
    feature_transforms = dict(feature_transforms or {})

    def _fit(data: Dataset, seed: int) -> TransformedPredictor:
        by_index = {
            resolve_variable(data.column_names, column): transform
            for column, transform in feature_transforms.items()
        }
        response = data.response
        if response_transform is not None:
            response = response_transform[0](response)
        with np.errstate(divide="ignore", invalid="ignore"):
            transformed = Dataset.from_arrays(
                _apply_transforms(data.covariates, by_index), response, data.column_names
            )
        inner = base.fit(transformed, seed)
        inverse = response_transform[1] if response_transform is not None else None
        return TransformedPredictor(inner, by_index, inverse, dict(inner.metadata))

    return ModelSpec(name, _fit)


# --------------------------------------------------------------------------- cross-validation

@dataclass(frozen=True, eq=False)
class CvResult:
    k: int
    reference: str
    champion: str
    per_fold_rmse: Dict[str, np.ndarray]
    relative_table: Dict[str, float]
    p_values: Dict[str, float]
    metadata: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    degenerate_tests: Tuple[str, ...] = ()

    def __post_init__(self):
        lengths = {len(scores) for scores in self.per_fold_rmse.values()}
        if lengths and lengths != {self.k}:
            raise InvalidArgumentError(f"every model needs {self.k} fold scores")

    @property
    def models(self) -> List[str]:
        return list(self.per_fold_rmse)

    @property
    def mean_rmse(self) -> Dict[str, float]:
        return {name: float(np.mean(scores)) for name, scores in self.per_fold_rmse.items()}


def fold_assignment(n_rows: int, k: int, seed: int) -> List[np.ndarray]:
    """Shuffle rows once and cut them into k near-equal folds."""
    order = stream(check_seed(seed), 0).permutation(n_rows)
    return [np.sort(fold) for fold in np.array_split(order, k)]


def paired_t_test(scores: np.ndarray, champion_scores: np.ndarray) -> Tuple[float, bool]:
    """Two-sided paired t-test p-value; (p, degenerate) with degenerate when the differences are constant."""
    differences = np.asarray(scores) - np.asarray(champion_scores)
    if np.all(differences == differences[0]):
        return (1.0 if differences[0] == 0 else 0.0), True
    return float(stats.ttest_rel(scores, champion_scores).pvalue), False


def kfold_cv(
    data: Dataset,
    models: Sequence[ModelSpec],
    k: int,
    reference: str,
    seed: int = 0,
    champion: Optional[str] = None,
) -> CvResult:
    """
    K-fold cross-validation of several models on the same folds.

    Args:
        data: the full dataset; folds are drawn from its rows
        models: specs to fit on each training fold, with unique names
        k: number of folds, 2 <= k <= rows
        reference: model whose mean RMSE the relative table divides by
        seed: fold assignment and per-fold model seeds derive from it
        champion: model the paired t-tests compare against; lowest mean RMSE when omitted

    Returns:
        CvResult with per-fold RMSE, relative RMSE and p-values per model

    A model that fails on a fold raises CrossValidationError naming the model and fold.
    """
    names = [spec.name for spec in models]
    if not models:
        raise InvalidArgumentError("cross-validation needs at least one model")
    if len(set(names)) != len(names):
        raise InvalidArgumentError(f"model names must be unique: {names}")
    if not 2 <= k <= data.n_rows:
        raise InvalidArgumentError(f"k must lie in [2, {data.n_rows}], got {k}")
    if reference not in names:
        raise InvalidArgumentError(f"reference model {reference!r} not among {names}")
    if champion is not None and champion not in names:
        raise InvalidArgumentError(f"champion model {champion!r} not among {names}")

    folds = fold_assignment(data.n_rows, k, seed)
    per_fold = {name: np.empty(k) for name in names}
    metadata: Dict[str, List[Dict[str, Any]]] = {name: [] for name in names}

    for index, test_rows in enumerate(folds):
        train = data.subset(np.setdiff1d(np.arange(data.n_rows), test_rows))
        test_x, test_y = data.covariates[test_rows], data.response[test_rows]
        fold_seed = derive_seed(seed, index)
        for spec in models:
            try:
                predictor = spec.fit(train, fold_seed)
                per_fold[spec.name][index] = rmse(test_y, predictor.predict(test_x))
            except (SmoothBoostError, ValueError, np.linalg.LinAlgError) as err:
                raise CrossValidationError(
                    f"model {spec.name!r} failed on fold {index + 1}: {err}", spec.name, index + 1
                ) from err
            metadata[spec.name].append(dict(predictor.metadata))
        logger.info("fold %d/%d done", index + 1, k)

    means = {name: float(np.mean(scores)) for name, scores in per_fold.items()}
    if champion is None:
        champion = min(names, key=lambda name: means[name])

    with np.errstate(divide="ignore", invalid="ignore"):
        relative = {name: float(np.float64(means[name]) / means[reference]) for name in names}
    relative[reference] = 1.0

    p_values, degenerate = {}, []
    for name in names:
        p_values[name], flat = paired_t_test(per_fold[name], per_fold[champion])
        if flat:
            degenerate.append(name)

    return CvResult(
        k=k,
        reference=reference,
        champion=champion,
        per_fold_rmse=per_fold,
        relative_table=relative,
        p_values=p_values,
        metadata=metadata,
        degenerate_tests=tuple(degenerate),
    )


# --------------------------------------------------------------------------- derivative recovery

class WindowedRmse(NamedTuple):
    inside: float
    outside: float


def window_rmse(estimate, truth, coordinate, quantile_window: Tuple[float, float]) -> WindowedRmse:
    """RMSE of estimate vs truth inside and outside an empirical quantile window of `coordinate`."""
    low, high = quantile_window
    if not 0 <= low < high <= 1:
        raise InvalidArgumentError("quantile window needs 0 ≤ lo < hi ≤ 1")
    estimate, truth, coordinate = (np.asarray(v, dtype=float) for v in (estimate, truth, coordinate))
    if not estimate.shape == truth.shape == coordinate.shape:
        raise InvalidArgumentError("estimate, truth and coordinate must have the same length")

    bounds = np.quantile(coordinate, [low, high])
    inside = (coordinate >= bounds[0]) & (coordinate <= bounds[1])
    if inside.all() or not inside.any():
        raise InvalidArgumentError(
            f"quantile window {quantile_window} leaves one side empty; both are needed"
        )
    return WindowedRmse(
        inside=rmse(truth[inside], estimate[inside]),
        outside=rmse(truth[~inside], estimate[~inside]),
    )


def derivative_recovery(
    model: BoostEnsemble,
    truth_partial,
    points,
    variable: int,
    quantile_window: Tuple[float, float] = (0.05, 0.95),
) -> WindowedRmse:
    request = PartialEffectRequest(points, variable)
    estimate = ensemble_partial(model, request)
    return window_rmse(estimate, truth_partial, request.points[:, request.variable], quantile_window)


# --------------------------------------------------------------------------- convergence sweeps

@dataclass(frozen=True)
class ConvergenceResult:
    parameter: str
    reports: Dict[Any, FitReport]   # grid value -> report, in grid order


def convergence_experiment(
    data: Dataset,
    base_params: Hyperparameters,
    parameter: str,
    grid: Sequence[Any],
    n_jobs: int = 1,
) -> ConvergenceResult:
    """
    Fit one model per grid value of one hyperparameter, everything else (seed included) fixed.

    Args:
        data: training dataset
        base_params: the fixed hyperparameters
        parameter: shrinkage, splits or gamma (or a Hyperparameters field name)
        grid: values to try; gamma values are (low, high) pairs
        n_jobs: threads for the split search

    Returns:
        ConvergenceResult mapping each grid value to its FitReport
    """
    parameter = SWEEP_PARAMETERS.get(parameter, parameter)
    if parameter not in Hyperparameters.model_fields or parameter == "seed":
        raise InvalidArgumentError(f"cannot sweep {parameter!r}")
    if not grid:
        raise InvalidArgumentError("sweep grid is empty")

    reports: Dict[Any, FitReport] = {}
    for value in grid:
        key = tuple(value) if isinstance(value, (list, tuple)) else value
        try:
            params = Hyperparameters.model_validate({**base_params.model_dump(), parameter: value})
            _, reports[key] = fit(data, params, n_jobs=n_jobs, progress_every=0)
        except (ValidationError, SmoothBoostError) as err:
            raise ExperimentError(f"{parameter}={value}: {err}", value) from err
        logger.info("%s=%s: final rmse %.6g", parameter, value, reports[key].final_rmse)
    return ConvergenceResult(parameter, reports)
