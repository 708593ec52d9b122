"""Tests for CSV ingestion, model files and result export."""

import numpy as np
import pandas as pd
import pytest
import yaml

from smoothboost.booster import fit
from smoothboost.evalkit import CvResult, benchmark_models, kfold_cv
from smoothboost.gradients import partial_effect_table
from smoothboost.model import BoostEnsemble, Dataset, InvalidArgumentError, ensemble_predict
from smoothboost.modelio import (
    CorruptModelError,
    DataFormatError,
    ExportFormat,
    ResultExportError,
    UnsupportedVersionError,
    atomic_output,
    export_results,
    load_model,
    read_csv,
    read_model_features,
    save_model,
    write_csv,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# --------------------------------------------------------------------------- CSV data

def test_read_numeric_csv(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8,10\n")
    data = read_csv(path, "y")
    assert (data.n_rows, data.n_features) == (3, 2)
    assert data.column_names == ("x1", "x2")
    np.testing.assert_array_equal(data.response, [3.0, 6.0, 10.0])


def test_constant_column_loads_but_is_ineligible(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,2,6\n7,2,10\n")
    data = read_csv(path, "y")
    assert data.column_sd[1] == 0.0
    np.testing.assert_array_equal(data.eligible_columns, [0])


def test_malformed_cell_cites_line(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,abc,6\n")
    with pytest.raises(DataFormatError, match="line 3") as info:
        read_csv(path, "y")
    assert info.value.column == "x2"
    assert info.value.line == 3


def test_missing_cells_drop_rows(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,,6\n7,8,9\n")
    data = read_csv(path, "y")
    assert data.n_rows == 2


def test_feature_selection_ignores_other_columns(tmp_path):
    path = _write(tmp_path / "data.csv", "id,x1,y\nabc,1,3\ndef,2,4\n")
    data = read_csv(path, "y", ["x1"])
    assert data.column_names == ("x1",)


def test_missing_target_and_empty_file(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2\n1,2\n")
    with pytest.raises(DataFormatError, match="target"):
        read_csv(path, "y")
    path = _write(tmp_path / "blank.csv", "x1,y\n,\n")
    with pytest.raises(DataFormatError, match="no usable rows"):
        read_csv(path, "y")


def test_binary_text_columns(tmp_path):
    path = _write(tmp_path / "data.csv", "gender,x,y\nmale,1,3\nfemale,2,4\nmale,3,5\n")
    with pytest.raises(DataFormatError):
        read_csv(path, "y")
    data = read_csv(path, "y", binary_text=True)
    np.testing.assert_array_equal(data.covariates[:, 0], [1.0, 0.0, 1.0])


def test_read_csv_records_target(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,5,6\n")
    assert read_csv(path, "y").target_name == "y"


def _two_column_model(target="y"):
    return BoostEnsemble(0.0, 0.5, (), ("x1", "x2"), (1.0, 1.0), target_name=target)


def test_model_features_drop_the_target(tmp_path):
    path = _write(tmp_path / "data.csv", "x1,x2,y\n1,2,3\n4,,6\n7,8,9\n")
    matrix, rows = read_model_features(path, _two_column_model())
    np.testing.assert_array_equal(rows, [0, 2])
    np.testing.assert_array_equal(matrix, [[1.0, 2.0], [7.0, 8.0]])


def test_model_features_follow_model_column_order(tmp_path):
    path = _write(tmp_path / "data.csv", "y,x2,x1\n3,2,1\n6,5,4\n")
    matrix, _ = read_model_features(path, _two_column_model())
    np.testing.assert_array_equal(matrix, [[1.0, 2.0], [4.0, 5.0]])


def test_model_features_exclude_and_width(tmp_path):
    path = _write(tmp_path / "data.csv", "id,x1,x2\n10,1,2\n11,4,5\n")
    with pytest.raises(InvalidArgumentError, match="3 feature columns"):
        read_model_features(path, _two_column_model())
    matrix, _ = read_model_features(path, _two_column_model(), exclude=["id"])
    np.testing.assert_array_equal(matrix, [[1.0, 2.0], [4.0, 5.0]])


def test_model_features_match_other_names_by_position(tmp_path):
    path = _write(tmp_path / "data.csv", "a,b\n1,2\n")
    matrix, _ = read_model_features(path, _two_column_model(target=None))
    np.testing.assert_array_equal(matrix, [[1.0, 2.0]])


def test_dataset_write_read_identity(tmp_path, cosine_sim):
    path = tmp_path / "sim.csv"
    write_csv(cosine_sim.dataset, path)
    data = read_csv(path, "y")
    np.testing.assert_array_equal(data.covariates, cosine_sim.dataset.covariates)
    np.testing.assert_array_equal(data.response, cosine_sim.dataset.response)


# --------------------------------------------------------------------------- models

@pytest.fixture
def fitted(cosine_sim, small_params):
    return fit(cosine_sim.dataset, small_params)


def test_model_round_trip_is_bitwise(tmp_path, fitted):
    model, _ = fitted
    path = tmp_path / "model.yml"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded == model
    points = np.random.default_rng(0).normal(scale=2.0, size=(1000, 2))
    np.testing.assert_array_equal(ensemble_predict(loaded, points), ensemble_predict(model, points))


def test_model_file_layout(tmp_path, fitted):
    model, _ = fitted
    path = tmp_path / "model.yml"
    save_model(model, path)
    document = yaml.safe_load(path.read_text(encoding="utf-8"))
    assert list(document) == [
        "format_version", "baseline", "shrinkage", "columns", "target", "stage_count", "stages"
    ]
    assert document["format_version"] == 2
    assert document["stage_count"] == model.num_stages


def test_target_name_survives_save_and_load(tmp_path, cosine_sim, small_params):
    data = cosine_sim.dataset
    named = Dataset.from_arrays(data.covariates, data.response, data.column_names, "price")
    model, _ = fit(named, small_params.model_copy(update={"num_trees": 2}))
    assert model.target_name == "price"
    path = tmp_path / "model.yml"
    save_model(model, path)
    assert load_model(path).target_name == "price"


def test_version_one_files_still_load(tmp_path, fitted):
    model, _ = fitted
    path = tmp_path / "model.yml"
    save_model(model, path)
    document = yaml.safe_load(path.read_text(encoding="utf-8"))
    document["format_version"] = 1
    del document["target"]
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    loaded = load_model(path)
    assert loaded.target_name is None
    assert loaded.num_stages == model.num_stages


def test_same_model_same_bytes(tmp_path, fitted):
    model, _ = fitted
    save_model(model, tmp_path / "a.yml")
    save_model(model, tmp_path / "b.yml")
    assert (tmp_path / "a.yml").read_bytes() == (tmp_path / "b.yml").read_bytes()


def test_unsupported_version(tmp_path, fitted):
    model, _ = fitted
    path = tmp_path / "model.yml"
    save_model(model, path)
    document = yaml.safe_load(path.read_text(encoding="utf-8"))
    document["format_version"] = 99
    path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    with pytest.raises(UnsupportedVersionError):
        load_model(path)


def test_truncated_model_is_corrupt(tmp_path, fitted):
    model, _ = fitted
    path = tmp_path / "model.yml"
    save_model(model, path)
    text = path.read_text(encoding="utf-8")
    path.write_text(text[: len(text) // 2], encoding="utf-8")
    with pytest.raises(CorruptModelError):
        load_model(path)


def test_invariant_violation_is_named(tmp_path):
    model = BoostEnsemble(1.0, 0.5, (), ("x1",), (1.0,))
    path = tmp_path / "model.yml"
    save_model(model, path)
    path.write_text(path.read_text(encoding="utf-8").replace("shrinkage: 0.5", "shrinkage: 1.5"), encoding="utf-8")
    with pytest.raises(CorruptModelError, match=r"shrinkage ∈ \(0,1\]"):
        load_model(path)


def test_failed_save_leaves_no_file(tmp_path):
    target = tmp_path / "out.csv"
    with pytest.raises(RuntimeError):
        with atomic_output(target) as stream:
            stream.write("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


# --------------------------------------------------------------------------- result export

def test_fit_report_export(tmp_path, cosine_sim, small_params):
    _, report = fit(cosine_sim.dataset, small_params.model_copy(update={"num_trees": 3}))
    path = tmp_path / "report.csv"
    export_results(report, path)
    table = pd.read_csv(path, float_precision="round_trip")
    assert list(table.columns) == ["iteration", "rmse", "rho"]
    assert table["iteration"].tolist() == [1, 2, 3]
    np.testing.assert_array_equal(table["rmse"].to_numpy(), report.rmse_trace)


def test_partial_effect_table_export(tmp_path, fitted, cosine_sim):
    model, _ = fitted
    table = partial_effect_table(model, cosine_sim.dataset.covariates[:5], "x1")
    path = tmp_path / "derive.csv"
    export_results(table, path)
    assert list(pd.read_csv(path).columns) == ["point", "x1", "x2", "fitted", "partial"]


def test_cv_export(tmp_path, cosine_sim):
    result = kfold_cv(cosine_sim.dataset, benchmark_models(), k=3, reference="ols")
    path = tmp_path / "cv.csv"
    export_results(result, path)
    table = pd.read_csv(path)
    assert table["model"].tolist() == ["mean", "ols"]
    assert list(table.columns[-3:]) == ["fold1", "fold2", "fold3"]


def test_empty_cv_result_is_refused(tmp_path):
    empty = CvResult(k=0, reference="ols", champion="ols", per_fold_rmse={}, relative_table={}, p_values={})
    path = tmp_path / "cv.csv"
    with pytest.raises(ResultExportError):
        export_results(empty, path)
    assert not path.exists()


def test_structured_text_export(tmp_path, cosine_sim, small_params):
    _, report = fit(cosine_sim.dataset, small_params.model_copy(update={"num_trees": 2}))
    path = tmp_path / "report.yml"
    export_results(report, path, ExportFormat.STRUCTURED_TEXT)
    document = yaml.safe_load(path.read_text(encoding="utf-8"))
    assert document["columns"] == ["iteration", "rmse", "rho"]
    assert [row["iteration"] for row in document["rows"]] == [1, 2]


def test_non_finite_results_are_refused(tmp_path):
    with pytest.raises(ResultExportError):
        export_results(pd.DataFrame({"a": [1.0, np.nan]}), tmp_path / "bad.csv")
