"""Landmark cause-specific Cox supermodel and its dynamic risk predictions.

For each cause ``j`` the hazard at time ``t`` after landmark ``s`` is

    lambda_j(t | Z(s), s) = lambda_j0(t) exp(gamma_j(s) + beta_j Z(s)),
    gamma_j(s) = gamma_j1 (s / c) + gamma_j2 (s / c)^2,

fitted on the stacked landmark rows with delayed entry at ``s``, other
causes treated as censoring, and ICU by landmark-time interactions in
``beta_j``. Predictions use the exponential approximation of event-free
survival over the window ``[s, s + w]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from .datamodel import LM, TIME, TYPE, StackedDataset
from .exceptions import NoEventsError, ValidationError
from .solvers.cox import fit_cox_breslow
from .solvers.glm import linear_predictor


@dataclass(frozen=True)
class CauseFit:
    """Fitted cause-specific model: coefficients over :attr:`design_names`."""

    cause: int
    coefficients: np.ndarray
    event_times: np.ndarray
    increments: np.ndarray
    loglik: float
    iterations: int


class LandmarkSupermodel(BaseEstimator):
    """Cause-specific Cox supermodel on a stacked landmark dataset.

    Parameters
    ----------
    predictors : list of str
        Completed predictor columns ``Z(s)``.
    icu : str or None
        Binary predictor interacted with ``s / c`` and ``(s / c)^2``; skipped
        when None or absent from ``predictors``.
    causes : tuple of int
        Event types modelled; each needs at least one event.
    landmark_scale : float
        The constant ``c``.
    horizon : float
        Administrative censoring horizon used to build the stacked data and
        the default prediction window.
    """

    def __init__(self, predictors=None, icu="icu", causes=(1, 2, 3), landmark_scale=30.0, horizon=7.0,
                 tol=1e-8, max_iter=50):
        self.predictors = predictors
        self.icu = icu
        self.causes = causes
        self.landmark_scale = landmark_scale
        self.horizon = horizon
        self.tol = tol
        self.max_iter = max_iter

    @property
    def design_names(self):
        names = list(self.predictors) + ["s1", "s2"]
        if self.icu is not None and self.icu in self.predictors:
            names += [f"{self.icu}:s1", f"{self.icu}:s2"]
        return names

    def design(self, X):
        """Design matrix ``[Z, s/c, (s/c)^2, icu s/c, icu (s/c)^2]``.

        Raises
        ------
        ValidationError
            Any predictor is missing: predictions need completed data.
        """
        cols = [c for c in self.predictors if c not in X.columns]
        if cols:
            raise ValidationError(f"input lacks predictor columns {cols}")
        Z = X[list(self.predictors)].to_numpy(dtype=float)
        if np.isnan(Z).any():
            bad = [c for c, m in zip(self.predictors, np.isnan(Z).any(axis=0)) if m]
            raise ValidationError(f"predictors {bad} contain missing values; impute before modelling")
        s = X[LM].to_numpy(dtype=float) / float(self.landmark_scale)
        parts = [Z, s[:, None], (s**2)[:, None]]
        if self.icu is not None and self.icu in self.predictors:
            icu = X[self.icu].to_numpy(dtype=float)
            parts += [(icu * s)[:, None], (icu * s**2)[:, None]]
        return np.hstack(parts)

    def fit(self, X, y=None):
        """Fit one Cox model per cause on stacked rows (``LM``, ``eventtime``, ``type``)."""
        frame = X.frame if isinstance(X, StackedDataset) else X
        if self.predictors is None:
            raise ValidationError("predictors must be given")
        D = self.design(frame)
        times = frame[TIME].to_numpy(dtype=float)
        types = frame[TYPE].to_numpy()
        entry = frame[LM].to_numpy(dtype=float)
        if np.any(times <= entry):
            raise ValidationError("stacked rows need eventtime > LM")
        self.fits_ = {}
        for j in self.causes:
            status = (types == j).astype(float)
            if not status.any():
                raise NoEventsError(f"cause {j} has no events in the stacked data")
            fit = fit_cox_breslow(times, status, D, entry=entry, tol=self.tol, max_iter=self.max_iter)
            self.fits_[j] = CauseFit(j, fit.coefficients, fit.event_times, fit.baseline_increments,
                                     fit.loglik, fit.iterations)
        self.landmark_range_ = (int(entry.min()), int(entry.max()))
        grid = np.unique(np.concatenate([f.event_times for f in self.fits_.values()]))
        self.grid_ = grid
        # per-cause increments aligned on the common grid
        self.grid_increments_ = np.zeros((len(grid), len(self.causes)))
        for k, j in enumerate(self.causes):
            f = self.fits_[j]
            self.grid_increments_[np.searchsorted(grid, f.event_times), k] = f.increments
        return self

    def coefficients(self, cause):
        """Named coefficients of one cause, landmark terms included."""
        return pd.Series(self.fits_[cause].coefficients, index=self.design_names)

    def gamma(self, cause):
        c = self.coefficients(cause)
        return float(c["s1"]), float(c["s2"])

    def _window(self, X, w):
        if not hasattr(self, "fits_"):
            raise ValidationError("supermodel is not fitted")
        w = float(self.horizon if w is None else w)
        if w <= 0 or w > self.horizon:
            raise ValidationError(f"window must be in (0, {self.horizon}], got {w}")
        s = X[LM].to_numpy(dtype=float)
        lo, hi = self.landmark_range_
        if len(s) and (s.min() < lo or s.max() > hi):
            raise ValidationError(f"landmarks must lie within the fitted range [{lo}, {hi}]")
        D = self.design(X)
        risk = np.column_stack([np.exp(linear_predictor(D, self.fits_[j].coefficients)) for j in self.causes]) \
            if len(D) else np.zeros((0, len(self.causes)))
        return s, w, risk

    def _paths(self, X, w):
        """Per-row hazard increments and survival on the window grid.

        Yields ``(rows, hazards, survival)`` per landmark value, where
        ``hazards`` has shape (rows, times, causes) and ``survival`` is
        ``S(t_i)`` including the increment at ``t_i``.
        """
        s, w, risk = self._window(X, w)
        for value in np.unique(s):
            rows = np.flatnonzero(s == value)
            a = np.searchsorted(self.grid_, value, side="left")
            b = np.searchsorted(self.grid_, value + w, side="right")
            inc = self.grid_increments_[a:b]
            haz = risk[rows][:, None, :] * inc[None, :, :]
            total = haz[:, :, 0].copy()
            for k in range(1, haz.shape[2]):
                total += haz[:, :, k]
            surv = np.exp(-np.cumsum(total, axis=1))
            yield rows, haz, surv

    def predict_survival(self, X, w=None):
        """Event-free probability ``S(s + w | Z(s), s)`` for each row of ``X``."""
        out = np.ones(len(X))
        for rows, _, surv in self._paths(X, w):
            if surv.shape[1]:
                out[rows] = surv[:, -1]
        return out

    def predict_cif(self, X, cause=1, w=None):
        """Cause-specific cumulative incidence ``F_j(s + w | Z(s), s)``."""
        if cause not in self.causes:
            raise ValidationError(f"unknown cause {cause}; fitted causes are {tuple(self.causes)}")
        k = list(self.causes).index(cause)
        out = np.zeros(len(X))
        for rows, haz, surv in self._paths(X, w):
            out[rows] = np.sum(haz[:, :, k] * surv, axis=1)
        return out

    def predict(self, X):
        """CLABSI (cause 1) risk over the default horizon."""
        return self.predict_cif(X, cause=1 if 1 in self.causes else self.causes[0])
