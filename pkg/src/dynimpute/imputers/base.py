"""Shared machinery for landmark imputers."""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ..datamodel import ID, LM, Schema
from ..exceptions import UnimputableVariableError, ValidationError

INDICATOR_SUFFIX = "_missing"


def indicator_columns(frame: pd.DataFrame, schema: Schema):
    """Indicator column names and their member predictors.

    One indicator per predictor with at least one missing value in
    ``frame``; predictors sharing an ``indicator_group`` share one indicator,
    which is created when any member has missing values.

    Returns
    -------
    dict
        ``{indicator_name: [predictor, ...]}`` in schema order.
    """
    out = {}
    for p in schema:
        if not frame[p.name].isna().any():
            continue
        key = (p.indicator_group or p.name) + INDICATOR_SUFFIX
        out.setdefault(key, [])
    for p in schema:
        key = (p.indicator_group or p.name) + INDICATOR_SUFFIX
        if key in out:
            out[key].append(p.name)
    return out


def indicator_values(frame: pd.DataFrame, groups):
    """0/1 indicator frame: 1 where any member predictor is missing."""
    data = {}
    for col, members in groups.items():
        data[col] = frame[members].isna().any(axis=1).astype(np.float64).to_numpy()
    return pd.DataFrame(data, index=frame.index)


def augment_missing_indicators(data: pd.DataFrame, schema: Schema, fill_value=99.0, groups=None):
    """Append missing indicators and fill missing predictor values with a constant.

    Parameters
    ----------
    data : DataFrame
    schema : Schema
    fill_value : float
        Constant written into missing predictor entries.
    groups : dict, optional
        Indicator layout from :func:`indicator_columns`; derived from ``data``
        when omitted.
    """
    groups = indicator_columns(data, schema) if groups is None else groups
    ind = indicator_values(data, groups)
    out = data.copy()
    out[schema.names] = out[schema.names].fillna(fill_value)
    for col in ind.columns:
        out[col] = ind[col]
    return out


def _mode(values):
    """Most frequent value; ties go to the smallest."""
    vals, counts = np.unique(values, return_counts=True)
    return float(vals[np.argmax(counts)])


def pooled_statistic(frame: pd.DataFrame, schema: Schema, name):
    """Median or mode of a predictor over all observed rows."""
    col = frame[name].to_numpy(dtype=float)
    col = col[~np.isnan(col)]
    if not len(col):
        raise UnimputableVariableError(f"predictor {name!r} is never observed in the training data")
    return _mode(col) if schema[name].is_categorical else float(np.median(col))


class LandmarkStatistics:
    """Per-landmark median (continuous, count) or mode (binary, ordinal).

    Landmarks without an observed training value fall back to the variable's
    statistic pooled over all landmarks.
    """

    def __init__(self, frame: pd.DataFrame, schema: Schema, names=None):
        names = schema.names if names is None else list(names)
        self.names = names
        self.pooled = {}
        self.by_landmark = {}
        lm = frame[LM].to_numpy()
        for name in names:
            col = frame[name].to_numpy(dtype=float)
            obs = ~np.isnan(col)
            if not obs.any():
                raise UnimputableVariableError(f"predictor {name!r} is never observed in the training data")
            categorical = schema[name].is_categorical
            self.pooled[name] = pooled_statistic(frame, schema, name)
            sub = pd.DataFrame({"lm": lm[obs], "v": col[obs]})
            if categorical:
                counts = sub.groupby(["lm", "v"]).size().reset_index(name="n")
                counts = counts.sort_values(["lm", "n", "v"], ascending=[True, False, True], kind="mergesort")
                per = counts.drop_duplicates("lm").set_index("lm")["v"]
            else:
                per = sub.groupby("lm")["v"].median()
            self.by_landmark[name] = per.astype(float)

    def values_at(self, name, landmarks):
        per = self.by_landmark[name]
        out = per.reindex(np.asarray(landmarks)).to_numpy(dtype=float)
        return np.where(np.isnan(out), self.pooled[name], out)

    def fill(self, frame: pd.DataFrame, names=None):
        """Copy of ``frame`` with missing entries replaced by the statistics."""
        out = frame.copy()
        lm = frame[LM].to_numpy()
        for name in self.names if names is None else names:
            col = out[name].to_numpy(dtype=float).copy()
            miss = np.isnan(col)
            if miss.any():
                col[miss] = self.values_at(name, lm[miss])
                out[name] = col
        return out


def missing_order(frame: pd.DataFrame, names):
    """Names with any missing value, in ascending missing fraction (stable)."""
    frac = frame[list(names)].isna().mean()
    frac = frac[frac > 0]
    return list(frac.sort_values(kind="mergesort").index)


def episode_order(frame: pd.DataFrame):
    """Positions that sort ``frame`` by episode, then landmark (stable)."""
    keyed = pd.DataFrame({ID: frame[ID].to_numpy(), LM: frame[LM].to_numpy()})
    return keyed.sort_values([ID, LM], kind="mergesort").index.to_numpy()


def episode_keys(frame: pd.DataFrame):
    """Row keys for counter-based random draws."""
    ids = frame[ID].to_numpy()
    if ids.dtype.kind == "f":
        ids = ids.astype(np.int64)
    return ids, frame[LM].to_numpy().astype(np.int64)


class LandmarkImputer(TransformerMixin, BaseEstimator):
    """Base class: ``fit`` on training landmark rows, ``impute`` anywhere.

    Subclasses implement ``_fit(frame)`` and ``_impute(frame)``; the latter
    returns a list of completed predictor arrays, one per completion, each
    aligned with ``frame``'s rows and ``schema.names``. Columns outside the
    schema pass through untouched.
    """

    strategy = None
    stochastic = False

    @property
    def n_completions(self):
        return 1

    def _check_frame(self, X, fitted=True):
        if self.schema is None:
            raise ValidationError("imputer needs a schema")
        if not isinstance(X, pd.DataFrame):
            raise ValidationError("imputers operate on pandas DataFrames")
        need = [ID, LM, *self.schema.names]
        missing = [c for c in need if c not in X.columns]
        if missing:
            raise ValidationError(f"input lacks columns {missing}")
        if fitted and not hasattr(self, "schema_digest_"):
            raise ValidationError(f"{type(self).__name__} is not fitted")
        if fitted and self.schema.digest() != self.schema_digest_:
            raise ValidationError("schema differs from the one used at fit time")
        return X

    def fit(self, X, y=None):
        X = self._check_frame(X, fitted=False)
        self.schema_digest_ = self.schema.digest()
        self.n_features_in_ = len(self.schema)
        self.feature_names_in_ = np.asarray(self.schema.names, dtype=object)
        self._fit(X)
        return self

    def _extras(self, X):
        """Extra columns appended to every completion (none by default)."""
        return None

    def _extra_names(self):
        return []

    def _assemble(self, X, arrays):
        extras = self._extras(X)
        out = []
        for arr in arrays:
            frame = X.copy()
            frame[self.schema.names] = arr
            if extras is not None:
                for col in extras.columns:
                    frame[col] = extras[col].to_numpy()
            out.append(frame)
        return out

    def impute(self, X):
        """Completed copies of ``X``, one per completion."""
        X = self._check_frame(X)
        if len(X) == 0:
            return self._assemble(X, [X[self.schema.names].to_numpy(dtype=float)] * self.n_completions)
        return self._assemble(X, self._impute(X))

    def fit_impute(self, X):
        """Fit on ``X`` and return its completed copies."""
        return self.fit(X).impute(X)

    def transform(self, X):
        out = self.impute(X)
        return out[0] if len(out) == 1 else out

    def impute_row(self, history):
        """Complete the last row of one episode's landmark history.

        ``history`` holds the episode's rows up to and including the
        prediction landmark; strategies that use past values read them from
        here. Returns one Series per completion.
        """
        history = self._check_frame(history)
        if history[ID].nunique() != 1:
            raise ValidationError("impute_row expects the rows of a single episode")
        history = history.sort_values(LM, kind="mergesort")
        return [frame.iloc[-1] for frame in self.impute(history)]

    def get_feature_names_out(self, input_features=None):
        return np.asarray([*self.schema.names, *self._extra_names()], dtype=object)
