"""Random-intercept mixed-model imputation from past landmark values."""
from __future__ import annotations

import warnings

import numpy as np
import pandas as pd

from ..datamodel import ID, LM
from ..solvers.glm import linear_predictor
from ..solvers.mixed import fit_random_intercept, posterior_modes
from .base import LandmarkImputer, LandmarkStatistics, episode_order, missing_order

_FAMILY = {"continuous": "gaussian", "binary": "binomial", "count": "poisson", "ordinal": "poisson"}


def _prefix_pairs(episode_codes, observed, targets):
    """Pair every target row with the earlier observed rows of its episode.

    All arrays follow episode/landmark sort order. Returns the observed row
    positions and, for each, the index of its target within ``targets``.
    """
    obs_pos = np.flatnonzero(observed)
    # number of observed rows strictly before each position, per episode
    cum = np.cumsum(observed) - observed
    first = np.r_[True, episode_codes[1:] != episode_codes[:-1]]
    starts = np.maximum.accumulate(np.where(first, np.arange(len(first)), 0))
    before_episode = cum[starts]
    t = np.flatnonzero(targets)
    counts = cum[t] - before_episode[t]
    offsets = np.repeat(before_episode[t], counts)
    within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    return obs_pos[offsets + within], np.repeat(np.arange(len(t)), counts)


class MixedModelImputer(LandmarkImputer):
    """Per-variable random-intercept models over an episode's landmarks.

    Static predictors are filled with their landmark mode/median and
    missing first-row values with the training baseline median/mode. Each
    remaining incomplete variable gets a random-intercept GLM (gaussian for
    continuous, logistic for binary, Poisson for counts and ordinal scores)
    with episode intercepts. Covariates are the landmark number plus the
    complete predictors; lumen counts use the landmark number and their
    catheter type, ordinal scores the landmark number alone.

    A missing value at landmark ``s`` is predicted with the episode's
    intercept estimated from its observed values at earlier landmarks, so
    training and new data are treated alike and nothing after ``s`` is used.
    Binary predictions are thresholded at 0.5 and counts rounded.
    """

    strategy = "mixed_model"

    def __init__(self, schema=None, ridge=1e-6):
        self.schema = schema
        self.ridge = ridge

    def _covariates(self, name):
        p = self.schema[name]
        if p.linked_catheter_type:
            return [LM, p.linked_catheter_type]
        if p.kind == "ordinal":
            return [LM]
        return [LM, *[c for c in self.complete_ if c != name]]

    def _prefill(self, X):
        """Sorted copy with static and first-row gaps filled, plus the mask
        of genuinely observed values in that order."""
        names = self.schema.names
        order = episode_order(X)
        frame = X.iloc[order][[ID, LM, *names]].reset_index(drop=True)
        seen = frame[names].notna().to_numpy()
        static = [p.name for p in self.schema if p.baseline_only]
        if static:
            frame = self.static_stats_.fill(frame, static)
        first = ~frame[ID].duplicated().to_numpy()
        dynamic = [n for n in names if n not in static]
        frame.loc[first, dynamic] = frame.loc[first, dynamic].fillna(pd.Series(self.baseline_))
        return frame, order, seen

    def _fit(self, X):
        names = self.schema.names
        stats = LandmarkStatistics(X, self.schema)
        self.static_stats_ = stats
        s0 = int(X[LM].min())
        self.baseline_ = {n: float(stats.values_at(n, [s0])[0]) for n in names}
        frame, _, seen = self._prefill(X)
        self.complete_ = [n for n in names if not X[n].isna().any()]
        self.order_ = missing_order(frame, names)
        self.models_ = {}
        groups = frame[ID].to_numpy()
        for name in self.order_:
            cov = self._covariates(name)
            # covariates that are themselves incomplete are median/mode-filled
            design = stats.fill(frame[[LM, *cov[1:]]], cov[1:])[cov].to_numpy(dtype=float)
            y = frame[name].to_numpy(dtype=float)
            # prefilled baselines are not data: fit on observed values only
            obs = seen[:, names.index(name)]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                self.models_[name] = fit_random_intercept(design[obs], y[obs], groups[obs],
                                                          _FAMILY[self.schema[name].kind], ridge=self.ridge)

    def _impute(self, X):
        names = self.schema.names
        frame, order, seen = self._prefill(X)
        codes = pd.factorize(frame[ID])[0]
        out = frame[names].to_numpy(dtype=float)
        for name in self.order_:
            j = names.index(name)
            y = out[:, j]
            targets = np.isnan(y)
            if not targets.any():
                continue
            observed = seen[:, j]
            cov = self._covariates(name)
            design = self.static_stats_.fill(frame[[LM, *cov[1:]]], cov[1:])[cov].to_numpy(dtype=float)
            fit = self.models_[name]
            src, slot = _prefix_pairs(codes, observed, targets)
            u = posterior_modes(fit, design[src], y[src], slot, int(targets.sum()))
            eta = linear_predictor(fit.design(design[targets]), fit.fixed_effects) + u
            if fit.family == "binomial":
                pred = (eta >= 0.0).astype(float)
            elif fit.family == "poisson":
                pred = np.round(np.exp(np.minimum(eta, 30.0)))
            else:
                pred = eta
            out[targets, j] = pred
        result = np.empty_like(out)
        result[order] = out
        return [result]
