"""Generalized linear models fitted by iteratively reweighted least squares."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..exceptions import SingularSystemError

FAMILIES = ("gaussian", "binomial", "poisson")
_ETA_CAP = 30.0


@dataclass(frozen=True)
class GlmFit:
    """Result of :func:`fit_glm`.

    ``covariance`` is the inverse penalized Fisher information scaled by the
    dispersion (the residual variance for the gaussian family, 1 otherwise).
    Coefficients include the intercept first when ``intercept`` was True.
    """

    family: str
    coefficients: np.ndarray
    converged: bool
    iterations: int
    intercept: bool = True
    covariance: np.ndarray | None = None
    dispersion: float = 1.0
    warning: str | None = None
    gradient: np.ndarray | None = field(default=None, repr=False)

    def design(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return np.column_stack([np.ones(len(X)), X]) if self.intercept else X

    def linear_predictor(self, X, coefficients=None):
        beta = self.coefficients if coefficients is None else coefficients
        return linear_predictor(self.design(X), beta)

    def predict(self, X):
        return inverse_link(self.family, self.linear_predictor(X))


def linear_predictor(X, beta):
    """Row-wise ``X @ beta`` whose value for a row never depends on other rows."""
    return (X * beta).sum(axis=-1)


def inverse_link(family, eta):
    if family == "gaussian":
        return eta
    if family == "binomial":
        return expit(eta)
    if family == "poisson":
        return np.exp(np.minimum(eta, _ETA_CAP))
    raise ValueError(f"unknown family {family!r}")


def _family(name):
    name = {"binomial-logit": "binomial", "poisson-log": "poisson"}.get(name, name)
    if name not in FAMILIES:
        raise ValueError(f"unknown family {name!r}")
    return name


def fit_glm(X, y, family="gaussian", ridge=1e-6, intercept=True, weights=None, offset=None,
            max_iter=50, tol=1e-8, beta0=None):
    """Fit a GLM with canonical link by IRLS.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Covariates, without intercept column.
    y : array_like, shape (n,)
    family : {'gaussian', 'binomial', 'poisson'}
        Also accepts 'binomial-logit' and 'poisson-log'.
    ridge : float
        L2 penalty on the slopes (the intercept is unpenalized).
    intercept : bool
    weights, offset : array_like, optional
    max_iter : int
    tol : float
        Stop when the largest coefficient change is below ``tol``.

    Returns
    -------
    GlmFit
        ``converged`` is False (with ``warning='separation'`` when fitted
        probabilities reach 0 or 1) if IRLS did not settle.

    Raises
    ------
    SingularSystemError
        The weighted normal equations are singular.
    """
    family = _family(family)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = len(y)
    if len(X) != n:
        raise ValueError("X and y lengths differ")
    if family == "binomial" and not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("binomial response must be 0/1")
    if family == "poisson" and ((y < 0).any() or (y != np.round(y)).any()):
        raise ValueError("poisson response must be a non-negative integer")
    D = np.column_stack([np.ones(n), X]) if intercept else X
    p = D.shape[1]
    w0 = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    pen = np.full(p, float(ridge))
    if intercept:
        pen[0] = 0.0

    if beta0 is not None:
        beta = np.asarray(beta0, dtype=float).copy()
    else:
        beta = np.zeros(p)
        if intercept and family != "gaussian":
            ybar = np.average(y, weights=w0)
            if family == "binomial":
                ybar = np.clip(ybar, 1e-6, 1 - 1e-6)
                beta[0] = np.log(ybar / (1 - ybar))
            else:
                beta[0] = np.log(max(ybar, 1e-6))

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = np.clip(D @ beta + off, -_ETA_CAP, _ETA_CAP) if family != "gaussian" else D @ beta + off
        mu = inverse_link(family, eta)
        if family == "gaussian":
            var = np.ones(n)
        elif family == "binomial":
            var = mu * (1 - mu)
        else:
            var = mu
        W = w0 * var
        H = (D * W[:, None]).T @ D + np.diag(pen)
        score = D.T @ (w0 * (y - mu)) - pen * beta
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError("singular weighted normal equations") from exc
        if not np.all(np.isfinite(step)) or np.linalg.cond(H) > 1e14:
            raise SingularSystemError("singular weighted normal equations")
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break

    eta = D @ beta + off
    mu = inverse_link(family, np.clip(eta, -_ETA_CAP, _ETA_CAP) if family != "gaussian" else eta)
    gradient = D.T @ (w0 * (y - mu)) - pen * beta
    warn = None
    if family == "binomial" and (np.any(np.abs(eta) >= _ETA_CAP) or not converged):
        warn = "separation"
        converged = False
        warnings.warn("binomial fit did not converge; possible separation", RuntimeWarning, stacklevel=2)
    if family == "gaussian":
        dof = max(np.sum(w0) - p, 1.0)
        dispersion = float(np.sum(w0 * (y - mu) ** 2) / dof)
        var = np.ones(n)
    else:
        dispersion = 1.0
        var = mu * (1 - mu) if family == "binomial" else mu
    H = (D * (w0 * var)[:, None]).T @ D + np.diag(pen)
    try:
        cov = np.linalg.inv(H) * dispersion
    except np.linalg.LinAlgError:
        cov = None
    return GlmFit(family, beta, converged, it, intercept, cov, dispersion, warn, gradient)
