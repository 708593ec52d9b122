"""
Command-line front end: train, predict, derive, curve, simulate, cv, trace.

Exit codes: 0 success, 1 runtime error, 2 usage error. Diagnostics go to
stderr through logging; data goes only to the output files.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from . import configure
from .booster import Hyperparameters, fit
from .evalkit import (
    SWEEP_PARAMETERS,
    benchmark_models,
    boost_model,
    convergence_experiment,
    kfold_cv,
    transformed_model,
)
from .gradients import effect_curve, partial_effect_table, representative_point
from .model import SmoothBoostError, ensemble_predict, resolve_variable
from .modelio import (
    export_results,
    load_model,
    read_csv,
    read_model_features,
    save_model,
    write_csv,
)
from .simgen import Dgp, SimSpec, generate

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad command line; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _floats(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _add_model_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("model")
    group.add_argument("--profile", default=configure.DEFAULT_PROFILE,
                       help="hyperparameter profile from config.yml (default: %(default)s)")
    group.add_argument("--trees", type=int, help="boosting iterations M")
    group.add_argument("--splits", type=int, help="splits per tree")
    group.add_argument("--gamma-min", type=float, help="lower bound of the raw transition slope")
    group.add_argument("--gamma-max", type=float, help="upper bound of the raw transition slope")
    group.add_argument("--shrinkage", type=float, help="learning rate v in (0, 1]")
    group.add_argument("--var-frac", type=float, help="fraction of covariates tried per split")
    group.add_argument("--grid", type=int, help="threshold candidates per covariate")
    group.add_argument("--seed", type=int, help="master random seed")


def _add_data_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--target", required=True, help="response column")
    parser.add_argument("--features", type=_names, help="comma-separated feature columns (default: all others)")
    parser.add_argument("--binary-text", action="store_true",
                        help="encode two-valued text columns as 0/1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smoothboost", description="Boosted smooth transition regression trees")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging level (default from config.yml)")
    parser.add_argument("--threads", type=int,
                        help="worker threads; -1 = all cores (default: $SMOOTHBOOST_THREADS or all cores)")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    train = commands.add_parser("train", help="fit a model and save it")
    _add_data_flags(train)
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--report", help="CSV of the per-iteration RMSE and rho trace")
    _add_model_flags(train)

    predict = commands.add_parser("predict", help="fitted values for every row of a feature file")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--exclude", type=_names, default=[], help="columns to ignore besides the training target")
    predict.add_argument("--out", required=True)

    derive = commands.add_parser("derive", help="fitted value and partial effect per row")
    derive.add_argument("--model", required=True)
    derive.add_argument("--data", help="feature file (rows are the evaluation points)")
    derive.add_argument("--at", type=_floats, help="a single comma-separated evaluation point instead of --data")
    derive.add_argument("--exclude", type=_names, default=[])
    derive.add_argument("--var", required=True, help="covariate name or index")
    derive.add_argument("--out", required=True)

    curve = commands.add_parser("curve", help="fitted value and partial effect along one covariate")
    curve.add_argument("--model", required=True)
    curve.add_argument("--data", required=True, help="feature file giving the grid range and medians")
    curve.add_argument("--exclude", type=_names, default=[])
    curve.add_argument("--var", required=True)
    curve.add_argument("--points", type=int, default=100)
    curve.add_argument("--at", type=_floats, help="point holding the other covariates (default: medians)")
    curve.add_argument("--group", help="covariate to vary across curves")
    curve.add_argument("--levels", type=_floats, help="values of --group, one curve each")
    curve.add_argument("--out", required=True)

    simulate = commands.add_parser("simulate", help="draw a synthetic dataset")
    simulate.add_argument("--dgp", required=True, choices=[dgp.value for dgp in Dgp])
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--r2", type=float, required=True)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--truth", help="CSV of the true signal and its derivative in x1")

    cv = commands.add_parser("cv", help="k-fold cross-validation against benchmark models")
    _add_data_flags(cv)
    cv.add_argument("--k", type=int, required=True)
    cv.add_argument("--reference", default="ols", help="model the relative RMSE is taken against")
    cv.add_argument("--champion", default="boost", help="model the t-tests compare against")
    cv.add_argument("--log-features", type=_names, help="also fit a log-linear model, logging these features")
    cv.add_argument("--log-target", action="store_true", help="log the response in the log-linear model")
    cv.add_argument("--out", required=True)
    _add_model_flags(cv)

    trace = commands.add_parser("trace", help="in-sample RMSE traces while sweeping one hyperparameter")
    _add_data_flags(trace)
    trace.add_argument("--sweep", required=True, choices=sorted(SWEEP_PARAMETERS))
    trace.add_argument("--values", required=True,
                       help="comma-separated grid; gamma ranges as lo:hi, e.g. 0.5:5,10:100")
    trace.add_argument("--out", required=True)
    _add_model_flags(trace)
    return parser


# --------------------------------------------------------------------------- helpers

def _validation_message(err: ValidationError) -> str:
    parts = []
    for error in err.errors():
        field = ".".join(str(part) for part in error["loc"])
        message = error["msg"].removeprefix("Value error, ")
        parts.append(f"{field}: {message}" if field else message)
    return "; ".join(parts)


def hyperparameters_from(args: argparse.Namespace) -> Hyperparameters:
    """Profile values overridden by explicit flags; range errors become usage errors."""
    overrides = {
        "num_trees": args.trees,
        "splits_per_tree": args.splits,
        "shrinkage": args.shrinkage,
        "variable_fraction": args.var_frac,
        "threshold_grid": args.grid,
        "seed": args.seed,
    }
    try:
        if args.gamma_min is not None or args.gamma_max is not None:
            low, high = configure.get_profile(args.profile).gamma_range
            overrides["gamma_range"] = (
                low if args.gamma_min is None else args.gamma_min,
                high if args.gamma_max is None else args.gamma_max,
            )
        return configure.get_profile(args.profile, **overrides)
    except ValidationError as err:
        raise UsageError(_validation_message(err)) from err
    except SmoothBoostError as err:
        raise UsageError(str(err)) from err


def _threads(args: argparse.Namespace) -> int:
    if args.threads is not None:
        if args.threads == 0:
            raise UsageError("--threads must be nonzero")
        return args.threads
    try:
        return configure.default_threads()
    except SmoothBoostError as err:
        raise UsageError(str(err)) from err


def _sweep_values(parameter: str, text: str) -> list:
    try:
        if parameter == "gamma":
            values = []
            for item in _names(text):
                low, high = item.split(":")
                values.append((float(low), float(high)))
            return values
        if parameter == "splits":
            return [int(item) for item in _names(text)]
        return [float(item) for item in _names(text)]
    except ValueError:
        raise UsageError(f"--values: cannot parse {text!r} for --sweep {parameter}") from None


def _read_dataset(args: argparse.Namespace):
    return read_csv(args.data, args.target, args.features, binary_text=args.binary_text)


def _feature_matrix(args: argparse.Namespace, model):
    return read_model_features(args.data, model, exclude=args.exclude)


# --------------------------------------------------------------------------- commands

def _train(args):
    params = hyperparameters_from(args)
    n_jobs = _threads(args)
    data = _read_dataset(args)
    model, report = fit(data, params, n_jobs=n_jobs, progress_every=configure.progress_every())
    save_model(model, args.out)
    if args.report:
        export_results(report, args.report)


def _predict(args):
    model = load_model(args.model)
    matrix, rows = _feature_matrix(args, model)
    predictions = ensemble_predict(model, matrix)
    export_results(pd.DataFrame({"row": rows, "prediction": predictions}), args.out)


def _derive(args):
    if (args.at is None) == (args.data is None):
        raise UsageError("derive needs exactly one of --data or --at")
    model = load_model(args.model)
    if args.at is not None:
        table = partial_effect_table(model, np.asarray(args.at), args.var)
    else:
        matrix, rows = _feature_matrix(args, model)
        table = partial_effect_table(model, matrix, args.var, rows=rows)
    export_results(table, args.out)


def _curve(args):
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    if (args.group is None) != (args.levels is None):
        raise UsageError("--group and --levels go together")
    model = load_model(args.model)
    matrix, _ = _feature_matrix(args, model)
    index = resolve_variable(model.column_names, args.var)
    column = matrix[:, index]
    grid = np.linspace(column.min(), column.max(), args.points)
    at = representative_point(matrix) if args.at is None else np.asarray(args.at)
    table = effect_curve(model, index, grid, at, args.group, args.levels)
    export_results(table, args.out)


def _simulate(args):
    try:
        spec = SimSpec(dgp=args.dgp, n=args.n, target_r2=args.r2, seed=args.seed)
    except ValidationError as err:
        raise UsageError(_validation_message(err)) from err
    simulation = generate(spec)
    write_csv(simulation.dataset, args.out)
    if args.truth:
        truth = pd.DataFrame(simulation.dataset.covariates, columns=list(simulation.dataset.column_names))
        truth["signal"] = simulation.truth
        truth["partial_x1"] = simulation.true_partial
        export_results(truth, args.truth)


def _cv(args):
    params = hyperparameters_from(args)
    n_jobs = _threads(args)
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    if args.log_target and not args.log_features:
        raise UsageError("--log-target needs --log-features")
    data = _read_dataset(args)

    benchmarks = benchmark_models()
    models = benchmarks + [boost_model(params, "boost", n_jobs)]
    if args.log_features:
        ols = next(spec for spec in benchmarks if spec.name == "ols")
        models.append(transformed_model(
            ols,
            "log-linear",
            {column: np.log for column in args.log_features},
            (np.log, np.exp) if args.log_target else None,
        ))
    result = kfold_cv(data, models, args.k, args.reference, params.seed, args.champion)
    for name in result.models:
        logger.info(
            "%s: mean rmse %.6g, relative %.4f, p %.4g",
            name, result.mean_rmse[name], result.relative_table[name], result.p_values[name],
        )
    export_results(result, args.out)


def _trace(args):
    params = hyperparameters_from(args)
    n_jobs = _threads(args)
    values = _sweep_values(args.sweep, args.values)
    if not values:
        raise UsageError("--values is empty")
    field = SWEEP_PARAMETERS[args.sweep]
    for value in values:
        try:
            Hyperparameters.model_validate({**params.model_dump(), field: value})
        except ValidationError as err:
            raise UsageError(_validation_message(err)) from err
    data = _read_dataset(args)
    result = convergence_experiment(data, params, args.sweep, values, n_jobs=n_jobs)
    export_results(result, args.out)


COMMANDS: Dict[str, Callable[[argparse.Namespace], None]] = {
    "train": _train,
    "predict": _predict,
    "derive": _derive,
    "curve": _curve,
    "simulate": _simulate,
    "cv": _cv,
    "trace": _trace,
}


def _configure_logging(level: Optional[str]):
    settings = configure.logging_settings()
    logging.basicConfig(
        stream=sys.stderr,
        format=settings["format"],
        level=level or settings["level"],
        force=True,
    )


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"smoothboost: {err}", file=sys.stderr)
        return 2
    except SystemExit as exit_:
        # --help and --version
        return int(exit_.code or 0)

    _configure_logging(args.log_level)
    try:
        COMMANDS[args.command](args)
    except UsageError as err:
        logger.error("%s", err)
        return 2
    except (SmoothBoostError, OSError) as err:
        logger.error("%s", err)
        return 1
    return 0
