"""Chained-equation imputers: single regression imputation and MICE."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .._random import derive_seed, hashed_normal, hashed_uniform
from ..datamodel import LM, PredictorSchema, Schema
from ..exceptions import ConfigError, ValidationError
from ..solvers.glm import fit_glm, linear_predictor
from ..solvers.pmm import DonorPool
from .base import LandmarkImputer, LandmarkStatistics, episode_keys, missing_order

_MEAN_FAMILY = {"continuous": "gaussian", "ordinal": "gaussian", "binary": "binomial", "count": "poisson"}


def _design(cur, j, lm):
    """Intercept, every other variable, and the landmark number."""
    others = np.delete(cur, j, axis=1)
    return np.column_stack([np.ones(len(cur)), others, lm])


def _conditional_mean(kind, eta, lo=None, hi=None):
    if kind == "binary":
        return (expit(eta) >= 0.5).astype(float)
    if kind == "count":
        return np.round(np.exp(np.minimum(eta, 30.0)))
    if kind == "ordinal":
        return np.clip(np.round(eta), lo, hi)
    return eta


def _cov_sqrt(cov):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _fit_quiet(X, y, family, ridge):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_glm(X, y, family, ridge=ridge, intercept=False)


class RegressionImputer(LandmarkImputer):
    """Deterministic single imputation by conditional means.

    Missing values start at the training landmark median/mode; one sweep
    over the incomplete variables (ascending missingness) replaces them with
    the conditional mean of a GLM on all other predictors and the landmark
    number: gaussian for continuous and ordinal values (ordinal rounded to
    the observed range), logistic for binary (thresholded at 0.5) and
    Poisson for counts (rounded).
    """

    strategy = "regression"

    def __init__(self, schema=None, ridge=1e-6):
        self.schema = schema
        self.ridge = ridge

    def _fit(self, X):
        names = self.schema.names
        self.stats_ = LandmarkStatistics(X, self.schema)
        self.order_ = missing_order(X, names)
        miss = X[names].isna().to_numpy()
        cur = self.stats_.fill(X[[LM, *names]])[names].to_numpy(dtype=float)
        lm = X[LM].to_numpy(dtype=float)
        self.models_ = {}
        for name in self.order_:
            j = names.index(name)
            kind = self.schema[name].kind
            obs = ~miss[:, j]
            D = _design(cur, j, lm)
            fit = _fit_quiet(D[obs], cur[obs, j], _MEAN_FAMILY[kind], self.ridge)
            lo, hi = float(cur[obs, j].min()), float(cur[obs, j].max())
            self.models_[name] = (fit.coefficients, lo, hi)
            rows = miss[:, j]
            cur[rows, j] = _conditional_mean(kind, linear_predictor(D[rows], fit.coefficients), lo, hi)

    def _impute(self, X):
        names = self.schema.names
        miss = X[names].isna().to_numpy()
        cur = self.stats_.fill(X[[LM, *names]])[names].to_numpy(dtype=float)
        lm = X[LM].to_numpy(dtype=float)
        for name in self.order_:
            j = names.index(name)
            rows = miss[:, j]
            if not rows.any():
                continue
            beta, lo, hi = self.models_[name]
            D = _design(cur[rows], j, lm[rows])
            cur[rows, j] = _conditional_mean(self.schema[name].kind, linear_predictor(D, beta), lo, hi)
        return [cur]


@dataclass
class _ChainModel:
    kind: str
    coefficients: np.ndarray
    cov_sqrt: np.ndarray
    pool: DonorPool | None


class MICEImputer(LandmarkImputer):
    """Multiple imputation by chained equations.

    Training runs ``maxit`` sweeps per completion over the incomplete
    variables in ascending missingness, starting from random draws of
    observed values. Binary variables are drawn from a logistic model with
    coefficients sampled from their approximate posterior; all others use
    predictive mean matching with ``k`` donors. The models of the final
    sweep are frozen per completion.

    Imputing new data starts from the training landmark median/mode and runs
    ``maxit`` sweeps with the frozen models. Coefficient draws are shared by
    all rows of a (completion, sweep, variable) step and the per-row draws
    are keyed on (episode, landmark), so a row gets the same completions
    alone or in any batch.

    Parameters
    ----------
    schema : Schema
    m : int
        Number of completions.
    maxit : int
        Sweeps per completion.
    outcome_mode : {'xx', 'yx'}
        ``'xx'`` leaves the outcome out of every model. ``'yx'`` uses the
        ``outcome`` column as a predictor in training; at imputation time the
        outcome is treated as missing, imputed alongside the predictors, and
        the input value is restored afterwards.
    outcome : str
        Binary outcome column used in ``'yx'`` mode.
    k : int
        PMM donors.
    seed : int
    """

    stochastic = True

    def __init__(self, schema=None, m=10, maxit=10, outcome_mode="xx", outcome="outcome", k=5,
                 ridge=1e-6, seed=0):
        self.schema = schema
        self.m = m
        self.maxit = maxit
        self.outcome_mode = outcome_mode
        self.outcome = outcome
        self.k = k
        self.ridge = ridge
        self.seed = seed

    @property
    def strategy(self):
        return f"mice_{self.outcome_mode}"

    @property
    def n_completions(self):
        return int(self.m)

    def _columns(self):
        names = list(self.schema.names)
        return names + [self.outcome] if self.outcome_mode == "yx" else names

    def _fit(self, X):
        self._run_training(X)

    def fit_impute(self, X):
        """Fit and return the training completions of the chained sweeps."""
        X = self._check_frame(X, fitted=False)
        self.schema_digest_ = self.schema.digest()
        self.n_features_in_ = len(self.schema)
        self.feature_names_in_ = np.asarray(self.schema.names, dtype=object)
        return self._assemble(X, self._run_training(X))

    def _run_training(self, X):
        if int(self.m) < 1 or int(self.maxit) < 1:
            raise ConfigError(f"m and maxit must be >= 1, got m={self.m}, maxit={self.maxit}")
        if self.outcome_mode not in ("xx", "yx"):
            raise ConfigError(f"outcome_mode must be 'xx' or 'yx', got {self.outcome_mode!r}")
        cols = self._columns()
        if self.outcome_mode == "yx":
            if self.outcome not in X.columns:
                raise ValidationError(f"outcome column {self.outcome!r} required in 'yx' mode")
            if X[self.outcome].isna().any():
                raise ValidationError("training outcome must be complete")
        schema = Schema([*self.schema, PredictorSchema(self.outcome, "binary")]) \
            if self.outcome_mode == "yx" else self.schema
        self.stats_ = LandmarkStatistics(X, schema, cols)
        self.kinds_ = [schema[c].kind for c in cols]
        A = X[cols].to_numpy(dtype=float)
        miss = np.isnan(A)
        lm = X[LM].to_numpy(dtype=float)
        self.order_ = missing_order(X, self.schema.names)
        visit = ([self.outcome] if self.outcome_mode == "yx" else []) + self.order_
        visit_idx = [cols.index(v) for v in visit]
        self.visit_ = visit

        m, maxit = int(self.m), int(self.maxit)
        self.chain_means_ = np.full((m, maxit, len(cols)), np.nan)
        self.models_ = []
        completions = []
        for c in range(m):
            rng = np.random.default_rng(derive_seed(self.seed, "mice-train", c))
            cur = A.copy()
            for j in visit_idx:
                rows = miss[:, j]
                if rows.any():
                    cur[rows, j] = rng.choice(A[~rows, j], rows.sum())
            models = {}
            for it in range(maxit):
                last = it == maxit - 1
                for j in visit_idx:
                    rows = miss[:, j]
                    if not rows.any() and not last:
                        continue
                    model = self._fit_one(cur, j, lm, ~rows)
                    if last:
                        models[cols[j]] = model
                    if rows.any():
                        D = _design(cur[rows], j, lm[rows])
                        beta = model.coefficients + model.cov_sqrt @ rng.standard_normal(len(model.coefficients))
                        cur[rows, j] = self._draw(model, linear_predictor(D, beta), rng.random(rows.sum()))
                        self.chain_means_[c, it, j] = cur[rows, j].mean()
            self.models_.append(models)
            completions.append(cur[:, : len(self.schema)])
        return completions

    def _fit_one(self, cur, j, lm, obs):
        kind = self.kinds_[j]
        D = _design(cur[obs], j, lm[obs])
        y = cur[obs, j]
        family = "binomial" if kind == "binary" else "gaussian"
        fit = _fit_quiet(D, y, family, self.ridge)
        cov = fit.covariance if fit.covariance is not None else np.zeros((D.shape[1],) * 2)
        pool = None
        if kind != "binary":
            if len(y) < 1:
                raise ValidationError(f"no donors for variable {j}")
            pool = DonorPool(linear_predictor(D, fit.coefficients), y)
        return _ChainModel(kind, fit.coefficients, _cov_sqrt(cov), pool)

    def _draw(self, model, eta, uniforms):
        if model.kind == "binary":
            return (uniforms < expit(eta)).astype(float)
        return model.pool.draw(eta, self.k, uniforms)

    def _impute(self, X):
        cols = self._columns()
        frame = X
        if self.outcome_mode == "yx":
            frame = X.assign(**{self.outcome: np.nan})
        A = frame[cols].to_numpy(dtype=float)
        miss = np.isnan(A)
        init = self.stats_.fill(frame[[LM, *cols]], cols)[cols].to_numpy(dtype=float)
        lm = X[LM].to_numpy(dtype=float)
        ids, lms = episode_keys(X)
        out = []
        for c, models in enumerate(self.models_):
            cur = init.copy()
            for it in range(int(self.maxit)):
                for name in self.visit_:
                    j = cols.index(name)
                    rows = miss[:, j]
                    if not rows.any():
                        continue
                    model = models[name]
                    p = len(model.coefficients)
                    z = hashed_normal(self.seed, "mice-apply", c, it, j, np.arange(p))
                    beta = model.coefficients + model.cov_sqrt @ z
                    D = _design(cur[rows], j, lm[rows])
                    u = hashed_uniform(self.seed, ids[rows], lms[rows], c, it, j)
                    cur[rows, j] = self._draw(model, linear_predictor(D, beta), u)
            out.append(cur[:, : len(self.schema)])
        return out
