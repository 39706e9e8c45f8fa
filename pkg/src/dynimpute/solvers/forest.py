"""Random forests with out-of-bag error, backed by scikit-learn trees."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor


@dataclass
class ForestFit:
    """Fitted forest plus its out-of-bag diagnostics.

    For regression ``oob_nmse`` is the OOB mean squared error divided by the
    variance of ``y``; for classification it is the OOB misclassification
    rate divided by the error of always predicting the mode.
    ``oob_predictions`` is NaN for rows that were never out of bag.
    """

    kind: str
    ntrees: int
    mtry: int
    oob_predictions: np.ndarray
    oob_nmse: float
    model: object = None
    constant: float | None = None

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.constant is not None:
            return np.full(len(X), self.constant)
        return self.model.predict(X).astype(float)


def fit_forest(X, y, ntrees=100, mtry=None, kind="regression", seed=0, min_node_size=None):
    """Fit a random forest of CART trees on bootstrap samples.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like, shape (n,)
    ntrees : int
    mtry : int, optional
        Split candidates per node; defaults to ``max(1, p // 3)`` for
        regression and ``floor(sqrt(p))`` for classification.
    kind : {'regression', 'classification'}
    seed : int
    min_node_size : int, optional
        Minimum leaf size; 5 for regression and 1 for classification.
    """
    if ntrees < 1:
        raise ValueError("ntrees must be >= 1")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if mtry is None:
        mtry = max(1, p // 3) if kind == "regression" else max(1, int(np.sqrt(p)))
    mtry = int(min(max(mtry, 1), p))
    if np.all(y == y[0]):
        return ForestFit(kind, ntrees, mtry, np.full(n, y[0]), 0.0, None, float(y[0]))

    if kind == "regression":
        leaf = 5 if min_node_size is None else min_node_size
        model = RandomForestRegressor(n_estimators=ntrees, max_features=mtry, min_samples_leaf=leaf,
                                      bootstrap=True, oob_score=True, random_state=seed, n_jobs=1)
    elif kind == "classification":
        leaf = 1 if min_node_size is None else min_node_size
        model = RandomForestClassifier(n_estimators=ntrees, max_features=mtry, min_samples_leaf=leaf,
                                       bootstrap=True, oob_score=True, random_state=seed, n_jobs=1)
    else:
        raise ValueError(f"unknown forest kind {kind!r}")
    with warnings.catch_warnings():
        # few trees leave some rows never out of bag
        warnings.simplefilter("ignore", UserWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        model.fit(X, y)

    if kind == "regression":
        oob = np.asarray(model.oob_prediction_, dtype=float).ravel()
        seen = np.isfinite(oob)
        nmse = float(np.mean((oob[seen] - y[seen]) ** 2) / np.var(y)) if seen.any() else np.nan
    else:
        proba = model.oob_decision_function_
        seen = np.isfinite(proba).all(axis=1)
        oob = np.full(n, np.nan)
        oob[seen] = model.classes_[np.argmax(proba[seen], axis=1)]
        values, counts = np.unique(y, return_counts=True)
        base_err = 1.0 - counts.max() / n
        err = float(np.mean(oob[seen] != y[seen])) if seen.any() else np.nan
        nmse = err / base_err
    return ForestFit(kind, ntrees, mtry, oob, nmse, model, None)
