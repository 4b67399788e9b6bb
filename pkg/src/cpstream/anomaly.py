"""One-class scoring over temporal-factor rows (detection + severity) and
k-NN scoring over location-factor rows (localization).

The detector is a Gaussian kernel mean scorer: score(z) is the average
kernel similarity of z to the training rows, thresholded at the nu-quantile
of the training scores. Decision values (score - threshold) are positive
for in-distribution rows and grow more negative the further a row sits from
the training cloud, which is what makes them usable as a severity signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidShapeError

SIGMA_FLOOR = 1e-8


class FScore(NamedTuple):
    precision: float
    recall: float
    fscore: float


@dataclass(frozen=True)
class AnomalyModel:
    """Frozen one-class scorer: training rows, kernel bandwidth, target
    anomaly rate and the decision threshold derived from it."""

    train_rows: np.ndarray  # events x R
    sigma: float
    nu: float
    threshold: float
    sigma_floored: bool = False

    @property
    def rank(self) -> int:
        return self.train_rows.shape[1]


def _kernel_scores(rows: np.ndarray, train: np.ndarray, sigma: float) -> np.ndarray:
    d2 = cdist(rows, train, metric="sqeuclidean")
    return np.exp(-d2 / (2.0 * sigma * sigma)).mean(axis=1)


def fit_one_class(train_rows, nu: float, sigma: float | None = None) -> AnomalyModel:
    """Fit the kernel mean scorer on healthy rows.

    sigma defaults to the median pairwise distance between training rows
    (floored at 1e-8 and flagged when the rows are degenerate).
    threshold is the nu-quantile of the training scores: the ceil(nu*M)-th
    smallest score, so at most that many training rows fall strictly below
    it.
    """
    rows = np.asarray(train_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InvalidShapeError("need a matrix with at least 2 training rows")
    if not np.all(np.isfinite(rows)):
        raise ValueError("training rows must be finite")
    if not 0.0 < nu < 1.0:
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    floored = False
    if sigma is None:
        m = rows.shape[0]
        pair = cdist(rows, rows)
        med = float(np.median(pair[np.triu_indices(m, k=1)]))
        sigma = med
        if sigma < SIGMA_FLOOR:
            sigma = SIGMA_FLOOR
            floored = True
    elif sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    train_scores = np.sort(_kernel_scores(rows, rows, sigma))
    cut = min(math.ceil(nu * rows.shape[0]), rows.shape[0] - 1)
    return AnomalyModel(
        train_rows=rows.copy(),
        sigma=float(sigma),
        nu=float(nu),
        threshold=float(train_scores[cut]),
        sigma_floored=floored,
    )


def decision_values(m: AnomalyModel, rows) -> np.ndarray:
    """score(row) - threshold per row; more negative = more anomalous."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0:
        return np.zeros((0,))
    if rows.ndim != 2 or rows.shape[1] != m.rank:
        raise InvalidShapeError(
            f"expected rows with {m.rank} columns, got shape {rows.shape}"
        )
    return _kernel_scores(rows, m.train_rows, m.sigma) - m.threshold


def localization_scores(location_factor_history: Sequence, k: int) -> np.ndarray:
    """Per snapshot, each location's mean distance to its k nearest peers.

    Takes a sequence of L x R location-factor snapshots (one per event) and
    returns an events x L score matrix. Neighbor ties break toward the
    lower row index.
    """
    snaps = [np.asarray(b, dtype=np.float64) for b in location_factor_history]
    if not snaps:
        return np.zeros((0, 0))
    shape = snaps[0].shape
    if len(shape) != 2:
        raise InvalidShapeError("location snapshots must be matrices")
    loc_count = shape[0]
    if not 1 <= k <= loc_count - 1:
        raise ValueError(f"k must lie in [1, {loc_count - 1}], got {k}")
    out = np.zeros((len(snaps), loc_count))
    for i, snap in enumerate(snaps):
        if snap.shape != shape:
            raise InvalidShapeError(
                f"snapshot {i} has shape {snap.shape}, expected {shape}"
            )
        dist = cdist(snap, snap)
        np.fill_diagonal(dist, np.inf)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[i] = np.take_along_axis(dist, nearest, axis=1).mean(axis=1)
    return out


def fscore(tp: int, fp: int, fn: int) -> FScore:
    """Precision, recall and their harmonic mean; 0 where a denominator
    vanishes."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be nonnegative")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return FScore(precision=precision, recall=recall, fscore=f)
