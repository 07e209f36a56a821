"""Self-normalised ratio estimators with delete-one jackknife errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RatioEstimate:
    value: float
    se: float
    normaliser: float

    def z(self, target: float) -> float:
        diff = self.value - target
        if self.se > 0:
            return float(diff / self.se)
        return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))


def weighted_ratio(h: np.ndarray, w: np.ndarray) -> RatioEstimate:
    """sum w h / sum w, with the jackknife standard error of the ratio.

    ``normaliser`` is the mean weight, the plain estimate of E[w].
    """
    h = np.asarray(h, dtype=float)
    w = np.asarray(w, dtype=float)
    M = len(h)
    if M < 2:
        raise ValueError("need at least two samples")
    sw, swh = w.sum(), (w * h).sum()
    if sw == 0:
        raise ZeroDivisionError("weights sum to zero")
    value = swh / sw
    loo = (swh - w * h) / (sw - w)
    se = np.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2))
    return RatioEstimate(float(value), float(se), float(sw / M))


def mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def covariance_se(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Sample covariance and its standard error from the centred products."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod = (x - x.mean()) * (y - y.mean())
    M = len(x)
    return float(prod.sum() / (M - 1)), float(prod.std(ddof=1) / np.sqrt(M))
