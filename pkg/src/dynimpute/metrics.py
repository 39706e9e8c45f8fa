"""Discrimination, calibration and overall performance of binary risk predictions.

Undefined metrics (single-class labels, zero prediction variance,
separation) are returned as ``NaN`` and reported as null, never as 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit, logit
from scipy.stats import rankdata

from .exceptions import ValidationError
from .solvers.glm import fit_glm

CLAMP = 1e-6


def _check(p, y):
    p = np.asarray(p, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(p) != len(y):
        raise ValidationError(f"predictions ({len(p)}) and labels ({len(y)}) differ in length")
    if len(p) == 0:
        raise ValidationError("no observations")
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise ValidationError("predictions must be probabilities in [0, 1]")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0/1")
    return p, y


def rubin_pool(preds, scale="probability"):
    """Pool predictions across imputations by averaging.

    Parameters
    ----------
    preds : sequence of array_like
        One prediction vector per completed dataset.
    scale : {'probability', 'logit'}
        Average risks directly, or average logits and transform back.
    """
    arrays = [np.asarray(p, dtype=float).ravel() for p in preds]
    if not arrays:
        raise ValidationError("need at least one prediction vector")
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValidationError("prediction vectors differ in length")
    stack = np.vstack(arrays)
    if scale == "probability":
        return stack.mean(axis=0)
    if scale == "logit":
        return expit(logit(np.clip(stack, CLAMP, 1 - CLAMP)).mean(axis=0))
    raise ValidationError(f"unknown pooling scale {scale!r}")


def auroc(p, y):
    """Mann-Whitney AUROC with midranks for ties."""
    p, y = _check(p, y)
    n1 = y.sum()
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        return np.nan
    ranks = rankdata(p)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def brier(p, y):
    p, y = _check(p, y)
    return float(np.mean((p - y) ** 2))


def scaled_brier(p, y):
    """``1 - Brier / Brier of the event-rate model``."""
    p, y = _check(p, y)
    null = np.mean((y.mean() - y) ** 2)
    if null == 0:
        return np.nan
    return float(1.0 - np.mean((p - y) ** 2) / null)


def calibration_slope(p, y):
    """Slope of a logistic regression of ``y`` on ``logit(p)``."""
    p, y = _check(p, y)
    if y.min() == y.max():
        return np.nan
    lp = logit(np.clip(p, CLAMP, 1 - CLAMP))
    if np.ptp(lp) == 0:
        return np.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_glm(lp, y, "binomial", ridge=0.0)
    if not fit.converged:
        return np.nan
    return float(fit.coefficients[1])


def oe_ratio(p, y):
    """Observed over expected events."""
    p, y = _check(p, y)
    expected = p.sum()
    if expected <= 0:
        return np.nan
    return float(y.sum() / expected)


def _silverman(x):
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * len(x) ** -0.2


def smooth_calibration(p, y, grid_size=200):
    """Local-linear Gaussian-kernel smoother of ``y`` on ``logit(p)``.

    Returns the grid of predicted risks and the smoothed observed risk on
    it. The bandwidth follows Silverman's rule of thumb on the logit scale.
    Constant predictions give the event rate.
    """
    p, y = _check(p, y)
    x = logit(np.clip(p, CLAMP, 1 - CLAMP))
    if np.ptp(x) == 0:
        return np.array([p[0]]), np.array([y.mean()])
    h = _silverman(x)
    if not h > 0:
        h = np.ptp(x) / 10
    grid = np.linspace(x.min(), x.max(), grid_size)
    fitted = np.empty(grid_size)
    for start in range(0, grid_size, 50):
        g = grid[start:start + 50]
        d = x[None, :] - g[:, None]
        k = np.exp(-0.5 * (d / h) ** 2)
        s0, s1, s2 = k.sum(1), (k * d).sum(1), (k * d * d).sum(1)
        t0, t1 = (k * y).sum(1), (k * d * y).sum(1)
        den = s0 * s2 - s1**2
        with np.errstate(invalid="ignore", divide="ignore"):
            ll = (s2 * t0 - s1 * t1) / den
            nw = t0 / s0
        ok = np.isfinite(ll) & (den > 1e-12 * s0 * s2)
        fitted[start:start + 50] = np.where(ok, ll, nw)
    return expit(grid), np.clip(fitted, 0.0, 1.0)


def eci(p, y, scale=100.0, min_n=50):
    """Estimated calibration index: ``scale * mean((p - c(p))^2)`` for the
    smoothed calibration curve ``c``."""
    p, y = _check(p, y)
    if len(p) < min_n:
        return np.nan
    grid_p, fitted = smooth_calibration(p, y)
    if not np.all(np.isfinite(fitted)):
        return np.nan
    if len(grid_p) == 1:
        c = np.full_like(p, fitted[0])
    else:
        x = logit(np.clip(p, CLAMP, 1 - CLAMP))
        c = np.interp(x, logit(grid_p), fitted)
    return float(scale * np.mean((p - c) ** 2))


def calibration_curve(p, y, bins=10):
    """Observed event rate against mean predicted risk per risk-quantile bin.

    Only occupied bins are returned; tied predictions share a bin.
    """
    p, y = _check(p, y)
    edges = np.quantile(p, np.linspace(0, 1, bins + 1))
    idx = np.searchsorted(edges[1:-1], p, side="right")
    frame = pd.DataFrame({"bin": idx, "p": p, "y": y})
    out = frame.groupby("bin").agg(mean_p=("p", "mean"), observed=("y", "mean"), n=("y", "size"))
    return out.reset_index()


@dataclass
class MetricReport:
    auroc: float
    brier: float
    scaled_brier: float
    calibration_slope: float
    oe_ratio: float
    eci: float
    n: int
    n_events: int
    curve: pd.DataFrame = field(default=None, repr=False)
    smooth: pd.DataFrame = field(default=None, repr=False)

    METRICS = ("auroc", "brier", "scaled_brier", "calibration_slope", "oe_ratio", "eci")

    @property
    def defined(self):
        return all(math.isfinite(getattr(self, m)) for m in self.METRICS)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("curve", "smooth")}
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def evaluate(p, y, bins=10, eci_scale=100.0):
    """All metrics for one prediction set."""
    p, y = _check(p, y)
    curve = calibration_curve(p, y, bins) if len(p) >= bins else None
    smooth = None
    if len(p) >= 2:
        gp, fitted = smooth_calibration(p, y)
        smooth = pd.DataFrame({"p": gp, "observed": fitted})
    return MetricReport(auroc(p, y), brier(p, y), scaled_brier(p, y), calibration_slope(p, y),
                        oe_ratio(p, y), eci(p, y, eci_scale), int(len(y)), int(y.sum()), curve, smooth)
