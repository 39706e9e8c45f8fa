"""Repeated-split experiments comparing imputation strategies.

Each (split, strategy) cell fits the imputer on the training episodes,
completes training and validation data, fits one landmark supermodel per
completed training set, predicts 7-day CLABSI risk on the matching
validation completion, pools the predictions and evaluates them per
landmark. Cells are independent and seeded from (master seed, split,
strategy), so they can run in any order or in parallel.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from ._random import derive_seed
from .datamodel import ADMISSION, CLABSI, ID, LM, TYPE, Schema, apply_lumen_rules, stack_landmarks, transform_labs
from .exceptions import ConfigError, ValidationError
from .imputers import make_imputer
from .io import read_episodes
from .landmark import LandmarkSupermodel
from .metrics import MetricReport, evaluate, rubin_pool
from .serialization import save_model
from .synthgen import (
    GeneratorConfig,
    MissingnessSpec,
    calibrate_baseline,
    desk_config,
    desk_missingness,
    generate_cohort,
    impose_missingness,
)

log = logging.getLogger(__name__)

OUTCOME = "outcome"
PHASES = ("impute", "build", "predict")
METRIC_COLUMNS = ["split", "strategy", "landmark", "metric", "value", "status", "n", "n_events"]
RUNTIME_COLUMNS = ["split", "strategy", "impute_s", "build_s", "predict_s", "status", "error"]
CURVE_COLUMNS = ["split", "strategy", "landmark", "kind", "bin", "mean_p", "observed", "n"]


@dataclass
class ExperimentConfig:
    """Settings of a repeated-split experiment.

    ``data`` is either ``{"path": <episode file>, "schema": [...]}`` or
    ``{"generator": {...}, "missingness": [...] | "desk", "calibrate": bool}``
    where ``generator`` holds :class:`GeneratorConfig` fields, or
    ``{"preset": "desk", ...overrides}``. ``imputer_params`` maps a strategy
    tag (without ``+ind``) to constructor keyword arguments.
    """

    data: dict = field(default_factory=lambda: {"generator": {"preset": "desk"}, "missingness": "desk"})
    strategies: list = field(default_factory=lambda: ["missing_indicator", "median_mode"])
    n_splits: int = 20
    ratio: float = 2 / 3
    s0: int = 0
    sL: int = 30
    horizon: float = 7.0
    report_cutoff: int = 14
    seed: int = 0
    output_dir: str | None = None
    n_jobs: int = 1
    save_models: str = "first"
    imputer_params: dict = field(default_factory=dict)
    icu: str | None = "icu"
    causes: tuple = (1, 2, 3)
    landmark_scale: float = 30.0
    eci_scale: float = 100.0
    pooling: str = "probability"
    deciles: int = 10

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("strategies must be non-empty")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies must be unique")
        if not 0.0 < float(self.ratio) < 1.0:
            raise ConfigError("split ratio must lie in (0, 1)")
        if int(self.n_splits) < 1:
            raise ConfigError("n_splits must be >= 1")
        if self.s0 > self.sL:
            raise ConfigError("s0 must not exceed sL")
        if self.save_models not in ("first", "all", "none"):
            raise ConfigError("save_models must be 'first', 'all' or 'none'")
        self.causes = tuple(int(c) for c in self.causes)
        for tag in self.strategies:
            make_imputer(tag, None)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(load_config_file(path))


def load_config_file(path):
    """Read a TOML or JSON config file into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def generator_from_dict(spec):
    spec = dict(spec)
    if spec.pop("preset", None) == "desk":
        return desk_config(**spec)
    return GeneratorConfig.from_dict(spec)


def missingness_from_config(spec):
    if spec is None:
        return []
    if spec == "desk":
        return desk_missingness()
    if isinstance(spec, dict) and spec.get("preset") == "desk":
        return desk_missingness(**{k: v for k, v in spec.items() if k != "preset"})
    return [MissingnessSpec(**s) for s in spec]


def build_cohort(data: dict):
    """Episode frame and schema for a config's ``data`` section."""
    data = dict(data)
    if "path" in data:
        schema = Schema.from_list(data["schema"]) if data.get("schema") else None
        return read_episodes(data["path"], schema)
    if "generator" not in data:
        raise ConfigError("data needs either 'path' or 'generator'")
    gen = generator_from_dict(data["generator"])
    if data.get("calibrate", False):
        gen = calibrate_baseline(gen, target=float(data.get("target_prevalence", 0.031)))
    cohort = generate_cohort(gen)
    specs = missingness_from_config(data.get("missingness"))
    cohort = impose_missingness(cohort, specs, gen.schema, seed=derive_seed(gen.seed, "missingness"))
    return cohort, gen.schema


def prepare(frame, schema, s0=0, sL=30, horizon=7.0):
    """Lumen rules, stacking with administrative censoring, log labs.

    Adds the binary ``outcome`` column (CLABSI inside the horizon).
    """
    frame = apply_lumen_rules(frame, schema)
    stacked = stack_landmarks(frame, schema, s0, sL, horizon).frame
    stacked = transform_labs(stacked, schema)
    stacked[OUTCOME] = (stacked[TYPE] == CLABSI).astype(float)
    return stacked


def split_by_admission(frame, ratio=2 / 3, seed=0):
    """Random admission-level partition into training and validation rows.

    ``round(ratio * n_admissions)`` admissions go to training; every row of
    an admission lands on the same side.
    """
    key = ADMISSION if ADMISSION in frame.columns else ID
    admissions = np.unique(frame[key].to_numpy())
    if len(admissions) < 2:
        raise ValidationError("need at least two admissions to split")
    n_train = int(round(ratio * len(admissions)))
    n_train = min(max(n_train, 1), len(admissions) - 1)
    perm = np.random.default_rng(seed).permutation(len(admissions))
    train_adm = admissions[np.sort(perm[:n_train])]
    in_train = np.isin(frame[key].to_numpy(), train_adm)
    return frame[in_train].reset_index(drop=True), frame[~in_train].reset_index(drop=True)


@dataclass
class CellResult:
    split: int
    strategy: str
    metrics: list
    curves: list
    runtime: dict
    diagnostics: dict = field(default_factory=dict)


def _metric_rows(split, tag, s, report: MetricReport | None, error=False):
    rows = []
    for name in MetricReport.METRICS:
        value = np.nan if report is None else getattr(report, name)
        status = "failed" if error else ("ok" if math.isfinite(value) else "undefined")
        rows.append({"split": split, "strategy": tag, "landmark": int(s), "metric": name, "value": value,
                     "status": status, "n": None if report is None else report.n,
                     "n_events": None if report is None else report.n_events})
    return rows


def run_cell(split, tag, train, val, schema, config: ExperimentConfig, model_dir=None):
    """Run one (split, strategy) cell; failures are recorded, never raised."""
    seed = derive_seed(config.seed, split, tag)
    landmarks = range(config.s0, min(config.report_cutoff, config.sL) + 1)
    runtime = {"split": split, "strategy": tag, "impute_s": np.nan, "build_s": np.nan, "predict_s": np.nan,
               "status": "ok", "error": ""}
    try:
        params = dict(config.imputer_params.get(tag.replace("+ind", ""), {}))
        if tag.replace("+ind", "") == "mice_yx":
            params.setdefault("outcome", OUTCOME)
        imputer = make_imputer(tag, schema, seed=seed, **params)

        t0 = time.perf_counter()
        train_sets = imputer.fit_impute(train)
        val_sets = imputer.impute(val)
        runtime["impute_s"] = time.perf_counter() - t0

        predictors = list(imputer.get_feature_names_out())
        t0 = time.perf_counter()
        models = [LandmarkSupermodel(predictors, icu=config.icu, causes=config.causes,
                                     landmark_scale=config.landmark_scale, horizon=config.horizon).fit(t)
                  for t in train_sets]
        runtime["build_s"] = time.perf_counter() - t0

        # only landmarks up to the report cutoff are evaluated
        report = (val[LM] <= landmarks[-1]).to_numpy()
        t0 = time.perf_counter()
        preds = rubin_pool([m.predict_cif(v[report], cause=CLABSI) for m, v in zip(models, val_sets)],
                           config.pooling)
        runtime["predict_s"] = time.perf_counter() - t0
    except Exception as exc:  # failures are data, the sweep goes on
        log.warning("split %d strategy %s failed: %s", split, tag, exc)
        runtime.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        metrics = [r for s in landmarks for r in _metric_rows(split, tag, s, None, error=True)]
        return CellResult(split, tag, metrics, [], runtime)

    metrics, curves = [], []
    lm = val[LM].to_numpy()[report]
    y = val[OUTCOME].to_numpy()[report]
    for s in landmarks:
        rows = lm == s
        if not rows.any():
            metrics += [{**r, "n": 0, "n_events": 0} for r in _metric_rows(split, tag, s, None)]
            continue
        report = evaluate(preds[rows], y[rows], bins=config.deciles, eci_scale=config.eci_scale)
        metrics += _metric_rows(split, tag, s, report)
        if report.curve is not None:
            for rec in report.curve.to_dict(orient="records"):
                curves.append({"split": split, "strategy": tag, "landmark": int(s), "kind": "decile",
                               "bin": int(rec["bin"]), "mean_p": rec["mean_p"], "observed": rec["observed"],
                               "n": int(rec["n"])})
        if report.smooth is not None:
            for i, rec in enumerate(report.smooth.to_dict(orient="records")):
                curves.append({"split": split, "strategy": tag, "landmark": int(s), "kind": "smooth",
                               "bin": i, "mean_p": rec["p"], "observed": rec["observed"], "n": None})
    if any(r["status"] == "undefined" for r in metrics):
        runtime["status"] = "undefined"

    diagnostics = {}
    base = getattr(imputer, "base_", imputer)
    if hasattr(base, "oob_nmse_"):
        diagnostics["oob_nmse"] = dict(base.oob_nmse_)
        diagnostics["iterations"] = int(base.n_iter_)
    if model_dir is not None:
        cell_dir = Path(model_dir) / f"split{split}" / tag
        cell_dir.mkdir(parents=True, exist_ok=True)
        save_model(imputer, cell_dir / "imputer.json")
        for k, model in enumerate(models):
            save_model(model, cell_dir / f"supermodel_{k}.json")
    return CellResult(split, tag, metrics, curves, runtime, diagnostics)


@dataclass
class ExperimentResult:
    metrics: pd.DataFrame
    runtimes: pd.DataFrame
    curves: pd.DataFrame
    summary: dict
    diagnostics: list

    @property
    def n_failed(self):
        return int((self.runtimes["status"] == "failed").sum())

    @property
    def exit_code(self):
        return 0 if self.n_failed == 0 else 1


def run_experiment(config: ExperimentConfig, frame=None, schema=None):
    """Run every (split, strategy) cell and collect the results.

    ``frame``/``schema`` override the config's data section. When
    ``config.output_dir`` is set, ``metrics.csv``, ``runtimes.csv``,
    ``curves.csv``, ``summary.json`` and model files are written there.
    """
    if frame is None:
        frame, schema = build_cohort(config.data)
    stacked = prepare(frame, schema, config.s0, config.sL, config.horizon)
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for split in range(int(config.n_splits)):
        train, val = split_by_admission(stacked, config.ratio, derive_seed(config.seed, "split", split))
        save = out_dir is not None and (config.save_models == "all" or
                                        (config.save_models == "first" and split == 0))
        model_dir = out_dir / "models" if save else None
        for tag in config.strategies:
            jobs.append((split, tag, train, val, model_dir))

    if config.n_jobs == 1:
        cells = [run_cell(s, t, tr, va, schema, config, md) for s, t, tr, va, md in jobs]
    else:
        from joblib import Parallel, delayed
        cells = Parallel(n_jobs=config.n_jobs)(
            delayed(run_cell)(s, t, tr, va, schema, config, md) for s, t, tr, va, md in jobs)

    order = {t: i for i, t in enumerate(config.strategies)}
    cells.sort(key=lambda c: (c.split, order[c.strategy]))
    metrics = pd.DataFrame([r for c in cells for r in c.metrics], columns=METRIC_COLUMNS)
    runtimes = pd.DataFrame([c.runtime for c in cells], columns=RUNTIME_COLUMNS)
    curves = pd.DataFrame([r for c in cells for r in c.curves], columns=CURVE_COLUMNS)
    diagnostics = [{"split": c.split, "strategy": c.strategy, **c.diagnostics} for c in cells if c.diagnostics]
    summary = summarize(metrics, runtimes)
    summary["config"] = _jsonable(asdict(config))
    if diagnostics:
        summary["diagnostics"] = diagnostics
    result = ExperimentResult(metrics, runtimes, curves, summary, diagnostics)
    if out_dir is not None:
        write_results(result, out_dir)
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return str(obj)


def write_results(result: ExperimentResult, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.metrics.to_csv(out_dir / "metrics.csv", index=False)
    result.runtimes.to_csv(out_dir / "runtimes.csv", index=False)
    result.curves.to_csv(out_dir / "curves.csv", index=False)
    (out_dir / "summary.json").write_text(json.dumps(_jsonable(result.summary), indent=2, sort_keys=True))


def summarize(metrics: pd.DataFrame, runtimes: pd.DataFrame):
    """Means (and medians/IQR) of metrics across splits and runtime summaries.

    Undefined and failed cells are excluded from the statistics and
    counted separately.
    """
    rows = []
    for (tag, s, name), grp in metrics.groupby(["strategy", "landmark", "metric"], sort=False):
        ok = grp.loc[grp["status"] == "ok", "value"].astype(float)
        rec = {"strategy": tag, "landmark": int(s), "metric": name, "n_ok": int(len(ok)),
               "n_undefined": int((grp["status"] == "undefined").sum()),
               "n_failed": int((grp["status"] == "failed").sum())}
        if len(ok):
            rec.update(mean=float(ok.mean()), median=float(ok.median()), q25=float(ok.quantile(0.25)),
                       q75=float(ok.quantile(0.75)))
        else:
            rec.update(mean=None, median=None, q25=None, q75=None)
        rows.append(rec)
    times = []
    for tag, grp in runtimes.groupby("strategy", sort=False):
        done = grp[grp["status"] != "failed"]
        for phase in PHASES:
            v = done[f"{phase}_s"].astype(float).dropna()
            rec = {"strategy": tag, "phase": phase, "n": int(len(v))}
            if len(v):
                rec.update(median=float(v.median()), q25=float(v.quantile(0.25)), q75=float(v.quantile(0.75)),
                           min=float(v.min()), max=float(v.max()), mean=float(v.mean()))
            times.append(rec)
    status = runtimes["status"].value_counts().to_dict() if len(runtimes) else {}
    return {
        "metrics": rows,
        "runtimes": times,
        "cells": {k: int(v) for k, v in status.items()},
        "notes": {
            "metrics": "mean across splits is the headline statistic; median and IQR are also given",
            "runtimes": "median (IQR) and range in seconds per phase",
        },
    }


def summarize_dir(in_dir):
    """Recompute ``summary.json`` from the CSV files in ``in_dir``."""
    in_dir = Path(in_dir)
    metrics = pd.read_csv(in_dir / "metrics.csv", float_precision="round_trip")
    runtimes = pd.read_csv(in_dir / "runtimes.csv", keep_default_na=False, na_values=[""],
                           float_precision="round_trip")
    summary = summarize(metrics, runtimes)
    (in_dir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return summary
