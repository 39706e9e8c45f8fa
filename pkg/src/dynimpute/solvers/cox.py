"""Cox proportional hazards by Newton-Raphson with Breslow ties.

Risk sets follow the counting-process convention: a row with entry time
``a`` and exit time ``t`` is at risk at event time ``u`` when ``a < u <= t``.
With no entry times every row enters at 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConvergenceError, NoEventsError


@dataclass(frozen=True)
class CoxFit:
    coefficients: np.ndarray
    event_times: np.ndarray
    baseline_increments: np.ndarray
    information: np.ndarray
    loglik: float
    iterations: int
    converged: bool = True

    @property
    def cumulative_baseline(self):
        return np.cumsum(self.baseline_increments)


class _RiskSets:
    """Sorted bookkeeping for repeated risk-set sums at distinct event times."""

    def __init__(self, times, status, entry, weights):
        self.times = times
        self.entry = entry
        self.w = weights
        ev = status > 0
        self.event_times, inv = np.unique(times[ev], return_inverse=True)
        self.d = np.bincount(inv, weights=weights[ev], minlength=len(self.event_times))
        self.event_rows = np.flatnonzero(ev)
        self.event_slot = inv
        self.exit_order = np.argsort(times, kind="mergesort")
        # rows with time >= u: suffix of exit order starting at searchsorted(left)
        self.exit_pos = np.searchsorted(times[self.exit_order], self.event_times, side="left")
        if entry is not None:
            self.entry_order = np.argsort(entry, kind="mergesort")
            # rows with entry >= u must be removed
            self.entry_pos = np.searchsorted(entry[self.entry_order], self.event_times, side="left")

    @staticmethod
    def _suffix(values, order, pos):
        v = values[order]
        csum = np.concatenate([np.cumsum(v[::-1], axis=0)[::-1], np.zeros((1,) + v.shape[1:])])
        return csum[pos]

    def sums(self, values):
        out = self._suffix(values, self.exit_order, self.exit_pos)
        if self.entry is not None:
            out = out - self._suffix(values, self.entry_order, self.entry_pos)
        return out


def _loglik_terms(rs, X, beta, need_hessian=True):
    # extreme coefficients can empty a risk-set sum; the caller rejects such steps
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _terms(rs, X, beta, need_hessian)


def _terms(rs, X, beta, need_hessian):
    eta = X @ beta
    shift = eta.max()
    r = rs.w * np.exp(eta - shift)
    S0 = rs.sums(r)
    S1 = rs.sums(r[:, None] * X)
    ev = rs.event_rows
    we = rs.w[ev]
    loglik = float(np.sum(we * eta[ev]) - np.sum(rs.d * (np.log(S0) + shift)))
    xbar = S1 / S0[:, None]
    grad = (we[:, None] * X[ev]).sum(axis=0) - (rs.d[:, None] * xbar).sum(axis=0)
    if not need_hessian:
        return loglik, grad, None, S0, shift
    S2 = rs.sums(r[:, None, None] * (X[:, :, None] * X[:, None, :]))
    info = np.einsum("k,kij->ij", rs.d, S2 / S0[:, None, None]) - np.einsum("k,ki,kj->ij", rs.d, xbar, xbar)
    return loglik, grad, info, S0, shift


def cox_loglik(times, status, X, beta, entry=None, weights=None):
    """Breslow partial log-likelihood at ``beta``."""
    times, status, X, entry, weights = _prepare(times, status, X, entry, weights)
    rs = _RiskSets(times, status, entry, weights)
    return _loglik_terms(rs, X, np.asarray(beta, float), need_hessian=False)[0]


def _prepare(times, status, X, entry, weights):
    times = np.asarray(times, dtype=float)
    status = np.asarray(status, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    entry = None if entry is None else np.asarray(entry, dtype=float)
    weights = np.ones(len(times)) if weights is None else np.asarray(weights, dtype=float)
    return times, status, X, entry, weights


def fit_cox_breslow(times, status, X, entry=None, weights=None, tol=1e-8, max_iter=50, eps=1e-10):
    """Maximize the Breslow partial likelihood and estimate the baseline hazard.

    Parameters
    ----------
    times : array_like
        Exit (event or censoring) times, > 0.
    status : array_like
        1 for an event at ``times``, 0 for censoring.
    X : array_like, shape (n, p)
    entry : array_like, optional
        Delayed-entry times; rows are at risk on ``(entry, times]``.
    weights : array_like, optional
        Case weights.
    tol : float
        Newton stops when the largest coefficient change is below ``tol``.
    max_iter : int
    eps : float
        Newton also stops when the relative change of the log partial
        likelihood falls below ``eps``; this ends fits in which a
        coefficient drifts towards infinity under monotone likelihood.

    Returns
    -------
    CoxFit
        Covariate directions carrying no information keep coefficient 0.
        ``baseline_increments[i]`` is ``d_i / sum_{R(t_i)} w exp(beta z)``.

    Raises
    ------
    NoEventsError
        No event in the data.
    ConvergenceError
        Newton-Raphson did not converge within ``max_iter`` iterations.
    """
    times, status, X, entry, weights = _prepare(times, status, X, entry, weights)
    if np.any(times <= 0):
        raise ValueError("times must be > 0")
    if not np.any(status > 0):
        raise NoEventsError("no events: Cox model is not estimable")
    n, p = X.shape
    center = np.average(X, axis=0, weights=weights) if n else np.zeros(p)
    Xc = X - center
    rs = _RiskSets(times, status, entry, weights)

    beta = np.zeros(p)
    loglik, grad, info, _, _ = _loglik_terms(rs, Xc, beta)
    scale = np.sqrt(np.abs(np.diag(info)))
    active = scale > 1e-10 * max(1.0, scale.max(initial=0.0))
    converged = not active.any()
    it = 0
    while not converged:
        it += 1
        if it > max_iter:
            gnorm = float(np.max(np.abs(grad[active])))
            raise ConvergenceError(
                f"Cox Newton-Raphson did not converge in {max_iter} iterations "
                f"(score max-norm {gnorm:.3g})", gradient_norm=gnorm)
        a = np.flatnonzero(active)
        sub = info[np.ix_(a, a)]
        try:
            step_a = np.linalg.solve(sub, grad[a])
        except np.linalg.LinAlgError:
            step_a = np.linalg.lstsq(sub, grad[a], rcond=None)[0]
        step = np.zeros(p)
        step[a] = step_a
        halvings = 0
        while True:
            cand = beta + step
            new_ll, new_grad, new_info, _, _ = _loglik_terms(rs, Xc, cand)
            ok = np.isfinite(new_ll) and np.all(np.isfinite(new_grad)) and np.all(np.isfinite(new_info))
            if ok and new_ll >= loglik - 1e-10 * abs(loglik):
                break
            if halvings >= 30:
                break
            step = step / 2
            halvings += 1
        if not ok or new_ll < loglik - 1e-10 * abs(loglik):
            # no representable improvement left along the Newton direction
            converged = True
            break
        flat = abs(new_ll - loglik) <= eps * max(abs(new_ll), 1.0)
        beta, loglik, grad, info = cand, new_ll, new_grad, new_info
        if np.max(np.abs(step)) < tol or flat:
            converged = True

    eta = Xc @ beta
    shift = eta.max() if n else 0.0
    S0 = rs.sums(weights * np.exp(eta - shift))
    # back to the uncentered scale: exp(beta z) = exp(beta zc) exp(beta c)
    log_inc = np.log(rs.d) - np.log(S0) - shift - float(center @ beta)
    increments = np.exp(log_inc)
    info_full = np.zeros((p, p))
    info_full[np.ix_(active, active)] = info[np.ix_(active, active)]
    return CoxFit(beta, rs.event_times, increments, info_full, loglik, it, True)
