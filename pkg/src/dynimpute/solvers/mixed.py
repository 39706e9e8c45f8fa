"""Random-intercept mixed models.

Gaussian responses use the profiled maximum likelihood with the closed form
inverse of the compound-symmetric covariance. Binomial and Poisson responses
use the Laplace approximation to the marginal likelihood: for each value of
the random-intercept SD the joint mode of fixed effects and intercepts is
found by penalized Newton steps, and the SD is chosen by maximizing the
Laplace-approximated likelihood over a bounded scalar search.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, gammaln

from .glm import _family, fit_glm, inverse_link, linear_predictor


@dataclass(frozen=True)
class MixedFit:
    family: str
    fixed_effects: np.ndarray
    sigma_u: float
    residual_sd: float | None = None
    blups: dict = field(default_factory=dict, repr=False)
    converged: bool = True
    warning: str | None = None
    loglik: float = np.nan

    def design(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return np.column_stack([np.ones(len(X)), X])

    def predict(self, X, u=0.0):
        eta = linear_predictor(self.design(X), self.fixed_effects) + u
        return inverse_link(self.family, eta)


def _group_index(groups):
    labels, idx = np.unique(np.asarray(groups), return_inverse=True)
    return labels, idx


def _gaussian_fit(D, y, g, G):
    N, p = D.shape
    n_i = np.bincount(g, minlength=G).astype(float)
    sX = np.zeros((G, p))
    np.add.at(sX, g, D)
    sy = np.bincount(g, weights=y, minlength=G)
    XtX = D.T @ D
    Xty = D.T @ y

    def solve(gamma):
        c = gamma / (1.0 + n_i * gamma)
        A = XtX - (sX * c[:, None]).T @ sX
        b = Xty - (sX * c[:, None]).T @ sy
        beta = np.linalg.solve(A, b)
        r = y - D @ beta
        sr = np.bincount(g, weights=r, minlength=G)
        rss = r @ r - np.sum(c * sr**2)
        sigma2 = max(rss / N, 1e-300)
        ll = -0.5 * (N * np.log(2 * np.pi * sigma2) + np.sum(np.log1p(n_i * gamma)) + N)
        return ll, beta, sigma2, c, sr

    best = solve(0.0)
    best_gamma = 0.0
    if np.any(n_i > 1):
        res = minimize_scalar(lambda lg: -solve(np.exp(lg))[0], bounds=(-25.0, 12.0), method="bounded",
                              options={"xatol": 1e-10})
        cand = solve(np.exp(res.x))
        if cand[0] > best[0]:
            best, best_gamma = cand, float(np.exp(res.x))
    ll, beta, sigma2, c, sr = best
    warn = None
    if not np.any(n_i > 1):
        warn = "single observation per group: random-intercept SD not identifiable"
        warnings.warn(warn, RuntimeWarning, stacklevel=3)
    u = c * sr
    return beta, float(np.sqrt(best_gamma * sigma2)), float(np.sqrt(sigma2)), u, ll, warn


def _cond_loglik(family, y, eta):
    if family == "binomial":
        return y * eta - np.logaddexp(0.0, eta)
    return y * eta - np.exp(eta) - gammaln(y + 1.0)


def _joint_mode(family, D, y, g, G, sigma, beta, u, ridge, max_iter=50, tol=1e-8):
    inv_s2 = 1.0 / sigma**2
    pen = np.full(D.shape[1], ridge)
    pen[0] = 0.0

    def objective(b, v):
        eta = np.clip(D @ b + v[g], -30, 30)
        return np.sum(_cond_loglik(family, y, eta)) - 0.5 * inv_s2 * v @ v - 0.5 * pen @ (b * b)

    obj = objective(beta, u)
    converged = False
    for _ in range(max_iter):
        eta = np.clip(D @ beta + u[g], -30, 30)
        mu = inverse_link(family, eta)
        w = mu * (1 - mu) if family == "binomial" else mu
        res = y - mu
        g_b = D.T @ res - pen * beta
        g_u = np.bincount(g, weights=res, minlength=G) - inv_s2 * u
        A = (D * w[:, None]).T @ D + np.diag(pen)
        Bt = np.zeros((G, D.shape[1]))
        np.add.at(Bt, g, D * w[:, None])
        d = np.bincount(g, weights=w, minlength=G) + inv_s2
        M = A - (Bt / d[:, None]).T @ Bt
        db = np.linalg.solve(M, g_b - Bt.T @ (g_u / d))
        du = (g_u - Bt @ db) / d
        step = 1.0
        for _ in range(30):
            new = objective(beta + step * db, u + step * du)
            if new >= obj - 1e-12 * abs(obj):
                break
            step /= 2
        beta, u, obj = beta + step * db, u + step * du, new
        if max(np.max(np.abs(step * db)), np.max(np.abs(step * du), initial=0.0)) < tol:
            converged = True
            break
    eta = np.clip(D @ beta + u[g], -30, 30)
    mu = inverse_link(family, eta)
    w = mu * (1 - mu) if family == "binomial" else mu
    W_i = np.bincount(g, weights=w, minlength=G)
    cond = np.sum(_cond_loglik(family, y, eta))
    laplace = cond - 0.5 * inv_s2 * u @ u - 0.5 * np.sum(np.log1p(sigma**2 * W_i))
    return beta, u, laplace, converged


def fit_random_intercept(X, y, groups, family="gaussian", ridge=1e-6, sigma_bounds=(1e-4, 10.0)):
    """Fit ``g(E[y_ij]) = a + x_ij b + u_i`` with ``u_i ~ N(0, sigma_u^2)``.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Fixed-effect covariates without intercept.
    y : array_like, shape (n,)
    groups : array_like, shape (n,)
        Group (episode) label of each observation.
    family : {'gaussian', 'binomial', 'poisson'}

    Returns
    -------
    MixedFit
        ``blups`` maps each training group label to its posterior mode.
    """
    family = _family(family)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    labels, g = _group_index(groups)
    G = len(labels)
    if G < 2:
        raise ValueError("at least two groups are required")
    D = np.column_stack([np.ones(len(y)), X])

    if family == "gaussian":
        beta, sigma_u, sd, u, ll, warn = _gaussian_fit(D, y, g, G)
        return MixedFit(family, beta, sigma_u, sd, dict(zip(labels.tolist(), u.tolist())), True, warn, ll)

    glm = fit_glm(X, y, family, ridge=ridge)
    beta0 = glm.coefficients
    ll0 = float(np.sum(_cond_loglik(family, y, np.clip(D @ beta0, -30, 30))))
    state = {"beta": beta0.copy(), "u": np.zeros(G)}

    def neg_laplace(log_sigma):
        b, u, lap, _ = _joint_mode(family, D, y, g, G, np.exp(log_sigma), state["beta"].copy(),
                                   state["u"].copy(), ridge)
        state["beta"], state["u"] = b, u
        return -lap

    lo, hi = np.log(sigma_bounds[0]), np.log(sigma_bounds[1])
    res = minimize_scalar(neg_laplace, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    sigma = float(np.exp(res.x))
    beta, u, lap, conv = _joint_mode(family, D, y, g, G, sigma, state["beta"], state["u"], ridge)
    if ll0 >= lap:
        return MixedFit(family, beta0, 0.0, None, dict.fromkeys(labels.tolist(), 0.0), glm.converged,
                        glm.warning, ll0)
    return MixedFit(family, beta, sigma, None, dict(zip(labels.tolist(), u.tolist())), conv, None, lap)


def posterior_modes(fit: MixedFit, X, y, group_index, n_groups, max_iter=50):
    """Posterior mode of the random intercept for each of ``n_groups`` groups.

    Groups without observations get 0, the prior mean.
    """
    y = np.asarray(y, dtype=float)
    g = np.asarray(group_index, dtype=np.int64)
    if fit.sigma_u <= 0 or len(y) == 0:
        return np.zeros(n_groups)
    eta0 = linear_predictor(fit.design(X), fit.fixed_effects)
    s2 = fit.sigma_u**2
    if fit.family == "gaussian":
        n_i = np.bincount(g, minlength=n_groups)
        sr = np.bincount(g, weights=y - eta0, minlength=n_groups)
        return s2 * sr / (fit.residual_sd**2 + n_i * s2)
    u = np.zeros(n_groups)
    # each group stops on its own so results do not depend on batch composition
    active = np.ones(n_groups, dtype=bool)
    for _ in range(max_iter):
        eta = np.clip(eta0 + u[g], -30, 30)
        mu = expit(eta) if fit.family == "binomial" else np.exp(eta)
        w = mu * (1 - mu) if fit.family == "binomial" else mu
        grad = np.bincount(g, weights=y - mu, minlength=n_groups) - u / s2
        hess = np.bincount(g, weights=w, minlength=n_groups) + 1.0 / s2
        step = np.where(active, np.clip(grad / hess, -2.0, 2.0), 0.0)
        u = u + step
        active &= np.abs(step) >= 1e-10
        if not active.any():
            break
    return u


def blup_for_new(fit: MixedFit, X, y):
    """Random-intercept posterior mode for one new group's observations."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        return 0.0
    return float(posterior_modes(fit, X, y, np.zeros(len(y), dtype=np.int64), 1)[0])
