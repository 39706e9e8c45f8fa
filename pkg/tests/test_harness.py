import json

import numpy as np
import pandas as pd
import pytest

from dynimpute.datamodel import ADMISSION, ID, LM
from dynimpute.exceptions import ConfigError, ValidationError
from dynimpute.harness import (
    CURVE_COLUMNS,
    METRIC_COLUMNS,
    RUNTIME_COLUMNS,
    ExperimentConfig,
    build_cohort,
    run_experiment,
    split_by_admission,
    summarize,
    summarize_dir,
)
from dynimpute.imputers import make_imputer
from dynimpute.serialization import dumps


def _small_config(tmp_path=None, **kw):
    base = dict(data={"generator": {"preset": "desk", "n_episodes": 400, "seed": 3}, "missingness": "desk"},
                strategies=["median_mode"], n_splits=1, seed=1,
                output_dir=None if tmp_path is None else str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def test_split_keeps_admissions_together():
    frame = pd.DataFrame({ID: [1, 2, 3, 4, 5, 6], ADMISSION: [1, 1, 1, 2, 3, 4], LM: 0})
    train, val = split_by_admission(frame, 0.5, seed=0)
    assert set(train[ADMISSION]).isdisjoint(val[ADMISSION])
    in_train = {i: i in set(train[ID]) for i in (1, 2, 3)}
    assert len(set(in_train.values())) == 1


def test_split_sizes_and_determinism():
    frame = pd.DataFrame({ID: np.arange(3000), ADMISSION: np.arange(3000), LM: 0})
    train, val = split_by_admission(frame, 2 / 3, seed=4)
    assert abs(len(train) - 2000) <= 1 and len(train) + len(val) == 3000
    again, _ = split_by_admission(frame, 2 / 3, seed=4)
    pd.testing.assert_frame_equal(train, again)
    with pytest.raises(ValidationError):
        split_by_admission(frame.head(1), 0.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(strategies=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(ratio=1.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(strategies=["nearest_neighbour"])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"strategies": ["locf"], "typo": 1})
    cfg = ExperimentConfig.from_dict({"strategies": ["locf", "mice_xx+ind"], "n_splits": 3})
    assert cfg.n_splits == 3 and cfg.horizon == 7.0 and cfg.report_cutoff == 14


def test_smoke_run_writes_outputs(tmp_path):
    cfg = _small_config(tmp_path, data={"generator": {"preset": "desk", "n_episodes": 100, "seed": 3},
                                        "missingness": "desk"})
    result = run_experiment(cfg)
    assert len(result.runtimes) == 1 and result.exit_code == 0
    assert sorted(result.metrics["landmark"].unique()) == list(range(15))
    for name, cols in (("metrics.csv", METRIC_COLUMNS), ("runtimes.csv", RUNTIME_COLUMNS),
                       ("curves.csv", CURVE_COLUMNS)):
        assert list(pd.read_csv(tmp_path / name).columns) == cols
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert {"metrics", "runtimes", "cells", "config"} <= set(summary)


def test_run_with_indicators_and_saved_models(tmp_path):
    cfg = _small_config(tmp_path, strategies=["missing_indicator", "median_mode+ind", "mice_xx"],
                        imputer_params={"mice_xx": {"m": 2, "maxit": 2}})
    result = run_experiment(cfg)
    assert result.exit_code == 0
    assert set(result.runtimes["status"]) <= {"ok", "undefined"}
    assert (result.runtimes[["impute_s", "build_s", "predict_s"]] >= 0).all().all()
    models = tmp_path / "models" / "split0"
    assert (models / "mice_xx" / "supermodel_1.json").exists()
    assert (models / "median_mode+ind" / "imputer.json").exists()


def test_failed_cell_is_recorded_and_sweep_continues():
    cfg = _small_config(strategies=["median_mode", "mice_xx"], imputer_params={"mice_xx": {"k": -5}},
                        causes=(1, 2, 3))
    result = run_experiment(cfg)
    status = dict(zip(result.runtimes["strategy"], result.runtimes["status"]))
    assert status["mice_xx"] == "failed" and status["median_mode"] != "failed"
    failed = result.metrics[result.metrics["strategy"] == "mice_xx"]
    assert (failed["status"] == "failed").all() and failed["value"].isna().all()
    assert result.exit_code == 1


def test_strategy_order_does_not_matter():
    a = run_experiment(_small_config(strategies=["median_mode", "locf"])).metrics
    b = run_experiment(_small_config(strategies=["locf", "median_mode"])).metrics
    key = ["strategy", "landmark", "metric"]
    pd.testing.assert_frame_equal(a.sort_values(key).reset_index(drop=True),
                                  b.sort_values(key).reset_index(drop=True))


def test_parallel_matches_serial():
    a = run_experiment(_small_config(strategies=["median_mode", "locf"], n_splits=2))
    b = run_experiment(_small_config(strategies=["median_mode", "locf"], n_splits=2, n_jobs=2))
    pd.testing.assert_frame_equal(a.metrics, b.metrics)


def test_imputer_fit_does_not_depend_on_validation(desk_split, desk_schema_):
    train, valid = desk_split
    for tag in ("median_mode", "regression", "mixed_model"):
        imp = make_imputer(tag, desk_schema_).fit(train)
        before = dumps(imp)
        imp.impute(valid)
        assert dumps(imp) == before


def test_summarize_means_and_counts():
    metrics = pd.DataFrame({"split": [0, 1, 2], "strategy": "a", "landmark": 0, "metric": "auroc",
                            "value": [0.7, 0.8, np.nan], "status": ["ok", "ok", "undefined"],
                            "n": 10, "n_events": 1})
    runtimes = pd.DataFrame({"split": [0, 1, 2], "strategy": "a", "impute_s": [1.0, 3.0, 2.0],
                             "build_s": 1.0, "predict_s": 0.5, "status": "ok", "error": ""})
    out = summarize(metrics, runtimes)
    rec = out["metrics"][0]
    assert rec["mean"] == pytest.approx(0.75) and rec["n_ok"] == 2 and rec["n_undefined"] == 1
    imp = [r for r in out["runtimes"] if r["phase"] == "impute"][0]
    assert imp["median"] == 2.0 and imp["min"] == 1.0 and imp["max"] == 3.0
    single = summarize(metrics.head(1), runtimes.head(1))
    assert single["metrics"][0]["mean"] == 0.7


def test_summarize_dir_round_trip(tmp_path):
    result = run_experiment(_small_config(tmp_path))
    first = json.loads((tmp_path / "summary.json").read_text())
    again = summarize_dir(tmp_path)
    assert again["metrics"] == json.loads(json.dumps(first["metrics"]))
    assert len(result.metrics) == len(pd.read_csv(tmp_path / "metrics.csv"))


def test_build_cohort_from_file(tmp_path, desk_schema_):
    from dynimpute.io import write_episodes
    frame, schema = build_cohort({"generator": {"preset": "desk", "n_episodes": 50}, "missingness": None})
    path = tmp_path / "ep.json"
    write_episodes(frame, path, schema)
    again, schema2 = build_cohort({"path": str(path)})
    assert schema2 == schema and len(again) == len(frame)
    with pytest.raises(ConfigError):
        build_cohort({})
