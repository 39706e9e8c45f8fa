"""Single-value imputers: landmark median/mode, LOCF and missing indicators."""
from __future__ import annotations

import numpy as np
import pandas as pd

from ..datamodel import ID, LM
from .base import (
    LandmarkImputer,
    LandmarkStatistics,
    episode_order,
    indicator_columns,
    indicator_values,
    pooled_statistic,
)


class MedianModeImputer(LandmarkImputer):
    """Fill with the training median (continuous, count) or mode (binary,
    ordinal) observed at the same landmark."""

    strategy = "median_mode"

    def __init__(self, schema=None):
        self.schema = schema

    def _fit(self, X):
        self.stats_ = LandmarkStatistics(X, self.schema)

    def _impute(self, X):
        return [self.stats_.fill(X[[LM, *self.schema.names]])[self.schema.names].to_numpy(dtype=float)]


class LOCFImputer(LandmarkImputer):
    """Last observation carried forward within an episode.

    The first row of each episode falls back to the training median/mode at
    the first landmark. Rows are carried forward in landmark order, so the
    result for a row depends only on its own episode's earlier rows.
    """

    strategy = "locf"

    def __init__(self, schema=None):
        self.schema = schema

    def _fit(self, X):
        stats = LandmarkStatistics(X, self.schema)
        s0 = int(X[LM].min())
        self.baseline_ = {n: float(stats.values_at(n, [s0])[0]) for n in self.schema.names}

    def _impute(self, X):
        names = self.schema.names
        order = episode_order(X)
        frame = X.iloc[order][[ID, *names]].reset_index(drop=True)
        first = ~frame[ID].duplicated().to_numpy()
        head = frame.loc[first, names]
        frame.loc[first, names] = head.fillna(pd.Series(self.baseline_))
        filled = frame.groupby(ID, sort=False)[names].ffill().to_numpy(dtype=float)
        out = np.empty_like(filled)
        out[order] = filled
        return [out]


class MissingIndicatorImputer(LandmarkImputer):
    """Fill missing values with a constant and add 0/1 missing indicators.

    The indicator layout is fixed at fit time from the training missingness.
    Predictors that were complete in training have no indicator to absorb
    the constant, so their rare missing values at apply time take the pooled
    training median/mode instead.
    """

    strategy = "missing_indicator"

    def __init__(self, schema=None, fill_value=99.0):
        self.schema = schema
        self.fill_value = fill_value

    def _fit(self, X):
        self.groups_ = indicator_columns(X, self.schema)
        self.flagged_ = sorted({m for members in self.groups_.values() for m in members})
        complete = [n for n in self.schema.names if n not in self.flagged_]
        self.fallback_ = {n: pooled_statistic(X, self.schema, n) for n in complete}

    def _impute(self, X):
        out = X[self.schema.names].copy()
        if self.flagged_:
            out[self.flagged_] = out[self.flagged_].fillna(float(self.fill_value))
        if self.fallback_:
            out = out.fillna(pd.Series(self.fallback_))
        return [out.to_numpy(dtype=float)]

    def _extras(self, X):
        return indicator_values(X, self.groups_)

    def _extra_names(self):
        return list(self.groups_)
