"""Predictive mean matching."""
from __future__ import annotations

import numpy as np


class DonorPool:
    """Observed donors sorted by their predicted means.

    Parameters
    ----------
    donor_preds, donor_values : array_like
        Point-estimate predictions and observed values of the donors, in
        donor-index order (the order used to break distance ties).
    """

    def __init__(self, donor_preds, donor_values):
        preds = np.asarray(donor_preds, dtype=float)
        values = np.asarray(donor_values, dtype=float)
        if len(preds) == 0:
            raise ValueError("predictive mean matching needs at least one donor")
        if len(preds) != len(values):
            raise ValueError("donor predictions and values differ in length")
        self.order = np.argsort(preds, kind="mergesort")
        self.sorted_preds = preds[self.order]
        self.values = values

    def __len__(self):
        return len(self.values)

    def nearest(self, targets, k):
        """Indices (into the donor arrays) of the ``k`` nearest donors per target.

        Rows are ordered by distance, ties by donor index.
        """
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        n = len(self.sorted_preds)
        k = min(int(k), n)
        pos = np.searchsorted(self.sorted_preds, targets)
        offsets = np.arange(-k, k)
        cand = np.clip(pos[:, None] + offsets[None, :], 0, n - 1)
        donor = self.order[cand]
        dist = np.abs(self.sorted_preds[cand] - targets[:, None])
        # clipped windows repeat edge donors; push duplicates to the end
        dup = np.zeros_like(dist, dtype=bool)
        dup[:, 1:] = cand[:, 1:] == cand[:, :-1]
        dist = np.where(dup, np.inf, dist)
        keys = np.lexsort((donor, dist), axis=1)
        ranked = np.take_along_axis(donor, keys, axis=1)
        return ranked[:, :k]

    def draw(self, targets, k, uniforms):
        """One donor value per target, uniform over its ``k`` nearest donors."""
        near = self.nearest(targets, k)
        kk = near.shape[1]
        pick = np.minimum((np.asarray(uniforms) * kk).astype(np.int64), kk - 1)
        return self.values[near[np.arange(len(near)), pick]]


def pmm_draw(target_pred, donor_preds, donor_values, k=5, rng=None):
    """Draw one observed donor value for a single target prediction."""
    if len(donor_preds) < 1:
        raise ValueError("predictive mean matching needs at least one donor")
    if len(donor_preds) < k:
        raise ValueError(f"need at least k={k} donors, got {len(donor_preds)}")
    rng = np.random.default_rng(rng)
    pool = DonorPool(donor_preds, donor_values)
    return float(pool.draw([target_pred], k, [rng.random()])[0])
