"""Log-log slope fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    ci95: tuple

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def slope_fit(x, y) -> SlopeFit:
    """Least squares on ``(log x, log y)`` with a 95% confidence band for the slope."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("log-log fit needs positive finite data")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    r2 = float(res.rvalue ** 2) if np.ptp(ly) > 0 else 1.0
    n = x.size
    half = float(stats.t.ppf(0.975, n - 2) * res.stderr) if n > 2 else float("inf")
    return SlopeFit(float(res.slope), float(res.intercept), r2,
                    (float(res.slope) - half, float(res.slope) + half))


def fit_loglog_slope(points):
    """``(slope, intercept, r2)`` of ``log(norm)`` against ``log(delta)`` for ``(delta, norm)`` pairs."""
    pts = np.asarray(points, float)
    f = slope_fit(pts[:, 0], pts[:, 1])
    return f.slope, f.intercept, f.r2
