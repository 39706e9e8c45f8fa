"""Combinator adding missing indicators to any imputation strategy."""
from __future__ import annotations

from sklearn.base import clone

from ..exceptions import ConfigError
from .base import LandmarkImputer, indicator_columns, indicator_values
from .simple import MissingIndicatorImputer


class WithIndicators(LandmarkImputer):
    """Impute with ``base`` and append 0/1 missing indicators.

    Missing entries hold the base strategy's imputations, not a constant.
    The indicator layout is fixed from the training missingness.
    """

    def __init__(self, base=None):
        self.base = base

    @property
    def schema(self):
        return self.base.schema

    @property
    def strategy(self):
        return f"{self.base.strategy}+ind"

    @property
    def stochastic(self):
        return self.base.stochastic

    @property
    def n_completions(self):
        return self.base.n_completions

    def _check_base(self):
        if self.base is None or isinstance(self.base, (MissingIndicatorImputer, WithIndicators)):
            raise ConfigError("with_indicators needs a base strategy other than the missing-indicator method")

    def fit(self, X, y=None):
        self._check_base()
        self.base_ = clone(self.base).fit(X)
        self._finish_fit(X)
        return self

    def fit_impute(self, X):
        self._check_base()
        self.base_ = clone(self.base)
        completions = self.base_.fit_impute(X)
        self._finish_fit(X)
        extras = self._extras(X)
        for frame in completions:
            for col in extras.columns:
                frame[col] = extras[col].to_numpy()
        return completions

    def _finish_fit(self, X):
        self.groups_ = indicator_columns(X, self.schema)
        self.schema_digest_ = self.base_.schema_digest_
        self.n_features_in_ = self.base_.n_features_in_
        self.feature_names_in_ = self.base_.feature_names_in_

    def _impute(self, X):
        return [frame[self.schema.names].to_numpy(dtype=float) for frame in self.base_.impute(X)]

    def _extras(self, X):
        return indicator_values(X, self.groups_)

    def _extra_names(self):
        return list(self.groups_)
