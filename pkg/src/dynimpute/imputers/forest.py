"""Iterative random-forest imputation with out-of-bag stopping."""
from __future__ import annotations

import numpy as np

from .._random import derive_seed
from ..datamodel import LM
from ..exceptions import ConfigError
from ..solvers.forest import fit_forest
from .base import LandmarkImputer, LandmarkStatistics, missing_order


class MissForestImputer(LandmarkImputer):
    """Iterative forest imputation in the style of missForest.

    Missing values start at the pooled training median/mode. Each
    iteration fits one forest per incomplete variable (ascending
    missingness) on all other predictors plus the landmark number and
    replaces that variable's missing entries with the forest predictions.
    Iteration stops once the summed out-of-bag NMSE increases, keeping the
    previous iteration, or after ``maxiter`` iterations. The forests of
    every kept iteration are stored and replayed on new data.

    Binary variables use classification forests; counts and ordinal scores
    are rounded regression predictions.

    Attributes
    ----------
    n_iter_ : int
        Kept iterations, replayed by :meth:`impute`.
    oob_nmse_ : dict
        Per-variable OOB NMSE of the last kept iteration.
    nmse_history_ : list of dict
        Per-variable OOB NMSE of every fitted iteration.
    """

    strategy = "missforest"

    def __init__(self, schema=None, ntrees=100, maxiter=10, mtry=None, seed=0):
        self.schema = schema
        self.ntrees = ntrees
        self.maxiter = maxiter
        self.mtry = mtry
        self.seed = seed

    def _predict(self, forest, kind, X):
        pred = forest.predict(X)
        if kind in ("count", "ordinal"):
            pred = np.round(pred)
        return pred

    def _fit(self, X):
        if int(self.ntrees) < 1:
            raise ConfigError("ntrees must be >= 1")
        if int(self.maxiter) < 1:
            raise ConfigError("maxiter must be >= 1")
        names = self.schema.names
        stats = LandmarkStatistics(X, self.schema)
        self.init_ = dict(stats.pooled)
        self.order_ = missing_order(X, names)
        miss = X[names].isna().to_numpy()
        cur = X[names].fillna(self.init_).to_numpy(dtype=float)
        lm = X[LM].to_numpy(dtype=float)[:, None]

        self.constant_ = {}
        for name in list(self.order_):
            j = names.index(name)
            observed = cur[~miss[:, j], j]
            if np.all(observed == observed[0]):
                self.constant_[name] = float(observed[0])
        modelled = [n for n in self.order_ if n not in self.constant_]

        self.forests_ = []
        self.nmse_history_ = []
        prev_total = np.inf
        for it in range(int(self.maxiter)):
            trial = cur.copy()
            forests, nmse = {}, {}
            for name in modelled:
                j = names.index(name)
                rows = miss[:, j]
                design = np.hstack([np.delete(trial, j, axis=1), lm])
                kind = self.schema[name].kind
                forest = fit_forest(design[~rows], trial[~rows, j], ntrees=int(self.ntrees), mtry=self.mtry,
                                    kind="classification" if kind == "binary" else "regression",
                                    seed=derive_seed(self.seed, "missforest", it, name))
                trial[rows, j] = self._predict(forest, kind, design[rows])
                forests[name] = forest
                nmse[name] = forest.oob_nmse
            self.nmse_history_.append(nmse)
            total = float(np.nansum(list(nmse.values())))
            if total > prev_total:
                break
            self.forests_.append(forests)
            cur = trial
            prev_total = total
            if not modelled:
                break
        self.n_iter_ = len(self.forests_)
        self.oob_nmse_ = self.nmse_history_[self.n_iter_ - 1] if self.n_iter_ else {}

    def _impute(self, X):
        names = self.schema.names
        miss = X[names].isna().to_numpy()
        cur = X[names].fillna(self.init_).to_numpy(dtype=float)
        for name, value in self.constant_.items():
            cur[miss[:, names.index(name)], names.index(name)] = value
        lm = X[LM].to_numpy(dtype=float)[:, None]
        for forests in self.forests_:
            for name, forest in forests.items():
                j = names.index(name)
                rows = miss[:, j]
                if not rows.any():
                    continue
                design = np.hstack([np.delete(cur[rows], j, axis=1), lm[rows]])
                cur[rows, j] = self._predict(forest, self.schema[name].kind, design)
        return [cur]
