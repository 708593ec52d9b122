"""
Model I/O - CSV ingestion, model persistence and result export.

Models are stored as a YAML document with an explicit format_version. Floats
are written by repr, the shortest text that parses back to the same double,
so a loaded model predicts bit-for-bit like the one that was saved.
"""

import logging
import os
import tempfile
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from .booster import FitReport
from .constants import FLOAT_FORMAT, MODEL_FORMAT_VERSION, READABLE_MODEL_FORMATS
from .evalkit import ConvergenceResult, CvResult
from .model import (
    BoostEnsemble,
    Dataset,
    InvalidArgumentError,
    Leaf,
    SmoothBoostError,
    SmoothTree,
    SplitNode,
    Stage,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DataFormatError(SmoothBoostError):
    def __init__(self, message: str, column: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.column = column
        self.line = line


class UnsupportedVersionError(SmoothBoostError):
    pass


class CorruptModelError(SmoothBoostError):
    pass


class ResultExportError(SmoothBoostError):
    pass


class ExportFormat(str, Enum):
    CSV = "csv"
    STRUCTURED_TEXT = "structured-text"


# --------------------------------------------------------------------------- output files

@contextmanager
def atomic_output(path: PathLike, mode: str = "w") -> Iterator:
    """Write to a temp file beside `path` and rename it into place only on success."""
    path = Path(path)
    handle, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    text = "b" not in mode
    try:
        with os.fdopen(handle, mode, encoding="utf-8" if text else None, newline="" if text else None) as stream:
            yield stream
        os.replace(temp_name, path)
    except BaseException:
        try:
            os.unlink(temp_name)
        except FileNotFoundError:
            pass
        raise


def _write_frame(frame: pd.DataFrame, path: PathLike):
    with atomic_output(path) as stream:
        frame.to_csv(stream, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


# --------------------------------------------------------------------------- CSV data

def _read_table(path: PathLike) -> pd.DataFrame:
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as err:
        raise DataFormatError(f"{path}: cannot parse CSV: {err}") from err
    table.columns = [str(column).strip() for column in table.columns]
    if len(set(table.columns)) != len(table.columns):
        raise DataFormatError(f"{path}: duplicate column names in header")
    return table


def _to_float(cell: str) -> float:
    # float() rounds correctly, so 17-digit text reads back bit-for-bit
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _encode_binary(column: str, cells: pd.Series) -> Optional[pd.Series]:
    present = cells[cells != ""]
    if pd.to_numeric(present, errors="coerce").notna().all():
        return None
    levels = sorted(present.unique())
    if len(levels) != 2:
        return None
    logger.warning("column %r: encoding %r as 0 and %r as 1", column, levels[0], levels[1])
    return cells.map({levels[0]: "0", levels[1]: "1", "": ""})


def _numeric_block(path: PathLike, table: pd.DataFrame, columns: Sequence[str], binary_text: bool):
    """Parse the selected columns; returns (matrix, kept row positions)."""
    cells = table[list(columns)].apply(lambda series: series.str.strip())
    if binary_text:
        for column in columns:
            encoded = _encode_binary(column, cells[column])
            if encoded is not None:
                cells[column] = encoded

    missing = (cells == "").any(axis=1).to_numpy()
    values = cells.apply(lambda series: series.map(_to_float)).astype(float)
    bad = values.isna().to_numpy() & (cells != "").to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        column = columns[col]
        # line 1 is the header
        raise DataFormatError(
            f"{path}: column {column!r} has non-numeric value {cells.iat[row, col]!r} on line {row + 2}",
            column=column,
            line=int(row) + 2,
        )
    matrix = values.to_numpy(dtype=float)
    if not np.all(np.isfinite(matrix[~missing])):
        row = int(np.argwhere(~np.isfinite(matrix) & ~missing[:, None])[0][0])
        raise DataFormatError(f"{path}: non-finite value on line {row + 2}", line=row + 2)
    if missing.any():
        logger.warning("%s: dropped %d row(s) with missing cells", path, int(missing.sum()))
    kept = np.flatnonzero(~missing)
    if kept.size == 0:
        raise DataFormatError(f"{path}: no usable rows")
    return matrix[kept], kept


def read_csv(
    path: PathLike,
    target_column: str,
    feature_columns: Optional[Sequence[str]] = None,
    binary_text: bool = False,
) -> Dataset:
    """
    Load a Dataset from a headed CSV file.

    Features default to every column except the target. Rows with a missing
    selected cell are dropped; any other non-numeric text is an error.
    """
    table = _read_table(path)
    if target_column not in table.columns:
        raise DataFormatError(f"{path}: target column {target_column!r} not found", column=target_column)
    if feature_columns is None:
        feature_columns = [column for column in table.columns if column != target_column]
    feature_columns = list(feature_columns)
    unknown = [column for column in feature_columns if column not in table.columns]
    if unknown:
        raise DataFormatError(f"{path}: feature columns not found: {', '.join(unknown)}")
    if target_column in feature_columns:
        raise DataFormatError(f"{path}: target {target_column!r} is also listed as a feature")
    if not feature_columns:
        raise DataFormatError(f"{path}: no feature columns")

    matrix, _ = _numeric_block(path, table, feature_columns + [target_column], binary_text)
    data = Dataset.from_arrays(matrix[:, :-1], matrix[:, -1], feature_columns, target_column)
    for s in np.flatnonzero(data.column_sd == 0):
        logger.warning("column %r has zero variance and will never be split on", data.column_names[s])
    logger.info("%s: %d rows, %d features", path, data.n_rows, data.n_features)
    return data


def read_model_features(
    path: PathLike,
    model: BoostEnsemble,
    exclude: Sequence[str] = (),
    binary_text: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Covariates for a fitted model, laid out in the model's column order.

    Args:
        path: headed CSV file
        model: the ensemble the rows will be fed to
        exclude: extra columns to ignore; the model's training target is always ignored
        binary_text: encode two-level text columns as 0/1

    Returns:
        (matrix, 0-based data row numbers kept)

    A file holding exactly the model's columns in another order is reordered
    by name. Same width under other names is matched by position with a
    warning; any other width is an InvalidArgumentError.
    """
    table = _read_table(path)
    skip = set(exclude)
    if model.target_name is not None:
        skip.add(model.target_name)
    columns = [column for column in table.columns if column not in skip]
    expected = list(model.column_names)

    if sorted(columns) == sorted(expected):
        if columns != expected:
            logger.info("%s: reordering columns %s to the model's %s", path, ",".join(columns), ",".join(expected))
        columns = expected
    elif len(columns) == len(expected):
        logger.warning(
            "%s: feature columns %s differ from the model's %s; matching by position",
            path, ",".join(columns), ",".join(expected),
        )
    else:
        raise InvalidArgumentError(
            f"{path}: {len(columns)} feature columns ({','.join(columns)}) "
            f"but the model expects {len(expected)} ({','.join(expected)})"
        )
    matrix, kept = _numeric_block(path, table, columns, binary_text)
    return matrix, kept


def write_csv(data: Dataset, path: PathLike, target_name: str = "y"):
    if target_name in data.column_names:
        raise InvalidArgumentError(f"target name {target_name!r} clashes with a covariate")
    frame = pd.DataFrame(data.covariates, columns=list(data.column_names))
    frame[target_name] = data.response
    _write_frame(frame, path)


# --------------------------------------------------------------------------- models

def _model_document(model: BoostEnsemble) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "baseline": model.baseline,
        "shrinkage": model.shrinkage,
        "columns": [
            {"name": name, "sd": sd} for name, sd in zip(model.column_names, model.column_sd)
        ],
        "target": model.target_name,
        "stage_count": model.num_stages,
        "stages": [
            {
                "rho": stage.rho,
                "parents": [
                    {
                        "position": node.position,
                        "variable": node.variable,
                        "raw_gamma": node.raw_gamma,
                        "slope": node.slope,
                        "location": node.location,
                    }
                    for node in stage.tree.parents
                ],
                "leaves": [
                    {
                        "position": leaf.position,
                        "weight": leaf.weight,
                        "path_codes": [[j, code] for j, code in leaf.path_codes.items()],
                    }
                    for leaf in stage.tree.leaves
                ],
            }
            for stage in model.stages
        ],
    }


def save_model(model: BoostEnsemble, path: PathLike):
    document = _model_document(model)
    with atomic_output(path) as stream:
        yaml.safe_dump(document, stream, sort_keys=False, default_flow_style=None, allow_unicode=True)
    logger.info("saved %d-stage model to %s", model.num_stages, path)


def _float(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CorruptModelError(f"{what} must be a number, got {value!r}")
    return float(value)


def _int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CorruptModelError(f"{what} must be an integer, got {value!r}")
    return value


def _build_stage(index: int, entry: dict) -> Stage:
    parents = [
        SplitNode(
            position=_int(node["position"], f"stage {index} parent position"),
            variable=_int(node["variable"], f"stage {index} parent variable"),
            location=_float(node["location"], f"stage {index} location"),
            slope=_float(node["slope"], f"stage {index} slope"),
            raw_gamma=_float(node["raw_gamma"], f"stage {index} raw_gamma"),
        )
        for node in entry["parents"]
    ]
    leaves = [
        Leaf(
            position=_int(leaf["position"], f"stage {index} leaf position"),
            weight=_float(leaf["weight"], f"stage {index} leaf weight"),
            path_codes={_int(j, "path code parent"): _int(code, "path code") for j, code in leaf["path_codes"]},
        )
        for leaf in entry["leaves"]
    ]
    return Stage(_float(entry["rho"], f"stage {index} rho"), SmoothTree(tuple(parents), tuple(leaves)))


def load_model(path: PathLike) -> BoostEnsemble:
    """Load and fully validate a saved model; never returns a partial model."""
    try:
        with open(path, encoding="utf-8") as stream:
            document = yaml.safe_load(stream)
    except yaml.YAMLError as err:
        raise CorruptModelError(f"{path}: not a readable model document: {err}") from err
    if not isinstance(document, dict):
        raise CorruptModelError(f"{path}: model document must be a mapping")

    version = document.get("format_version")
    if isinstance(version, bool) or version not in READABLE_MODEL_FORMATS:
        supported = ", ".join(str(v) for v in READABLE_MODEL_FORMATS)
        raise UnsupportedVersionError(
            f"{path}: unsupported model format version {version!r} (supported: {supported})"
        )

    try:
        stages = [_build_stage(index, entry) for index, entry in enumerate(document["stages"] or [], start=1)]
        expected = _int(document["stage_count"], "stage_count")
        if expected != len(stages):
            raise CorruptModelError(f"stage_count is {expected} but {len(stages)} stages are present")
        columns = document["columns"]
        target = document["target"] if version >= 2 else None
        if target is not None and not isinstance(target, str):
            raise CorruptModelError(f"target must be a column name, got {target!r}")
        model = BoostEnsemble(
            baseline=_float(document["baseline"], "baseline"),
            shrinkage=_float(document["shrinkage"], "shrinkage"),
            stages=tuple(stages),
            column_names=tuple(str(column["name"]) for column in columns),
            column_sd=tuple(_float(column["sd"], "column sd") for column in columns),
            target_name=target,
        )
    except CorruptModelError as err:
        raise CorruptModelError(f"{path}: {err}") from err
    except (KeyError, TypeError, ValueError) as err:
        # InvalidArgumentError is a ValueError and names the failed invariant
        detail = f"missing field {err}" if isinstance(err, KeyError) else str(err)
        raise CorruptModelError(f"{path}: {detail}") from err
    logger.info("loaded %d-stage model from %s", model.num_stages, path)
    return model


# --------------------------------------------------------------------------- result export

def _fit_report_frame(report: FitReport) -> pd.DataFrame:
    return pd.DataFrame({
        "iteration": np.arange(1, report.num_iterations + 1),
        "rmse": report.rmse_trace,
        "rho": report.rho_trace,
    })


def _cv_frame(result: CvResult) -> pd.DataFrame:
    if not result.per_fold_rmse or result.k == 0:
        raise ResultExportError("cross-validation result is empty")
    means = result.mean_rmse
    rows = []
    for name, scores in result.per_fold_rmse.items():
        row = {
            "model": name,
            "mean_rmse": means[name],
            "relative": result.relative_table[name],
            "p_value": result.p_values[name],
        }
        row.update({f"fold{i + 1}": float(score) for i, score in enumerate(scores)})
        rows.append(row)
    return pd.DataFrame(rows)


def _convergence_frame(result: ConvergenceResult) -> pd.DataFrame:
    if not result.reports:
        raise ResultExportError("convergence result is empty")
    frames = []
    for value, report in result.reports.items():
        frame = _fit_report_frame(report)
        label = "-".join(repr(v) for v in value) if isinstance(value, tuple) else repr(value)
        frame.insert(0, "value", label)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def result_frame(result) -> pd.DataFrame:
    if isinstance(result, FitReport):
        return _fit_report_frame(result)
    if isinstance(result, CvResult):
        return _cv_frame(result)
    if isinstance(result, ConvergenceResult):
        return _convergence_frame(result)
    if isinstance(result, pd.DataFrame):
        return result
    raise InvalidArgumentError(f"cannot export {type(result).__name__}")


def export_results(result, path: PathLike, format: Union[ExportFormat, str] = ExportFormat.CSV):
    """Write a FitReport, CvResult, ConvergenceResult or table with 17 significant digits."""
    format = ExportFormat(format)
    frame = result_frame(result)
    if frame.empty:
        raise ResultExportError(f"refusing to write an empty result to {path}")
    numeric = frame.select_dtypes(include="number").to_numpy(dtype=float)
    if not np.all(np.isfinite(numeric)):
        raise ResultExportError(f"result for {path} contains non-finite values")

    try:
        if format is ExportFormat.CSV:
            _write_frame(frame, path)
        else:
            records = [
                {key: (value.item() if isinstance(value, np.generic) else value) for key, value in row.items()}
                for row in frame.to_dict(orient="records")
            ]
            with atomic_output(path) as stream:
                yaml.safe_dump({"columns": list(frame.columns), "rows": records}, stream, sort_keys=False)
    except OSError as err:
        raise ResultExportError(f"cannot write {path}: {err}") from err
    logger.info("wrote %d rows to %s", len(frame), path)
