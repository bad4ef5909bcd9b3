"""Log-log slope fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import FitError


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(log x, log y)``."""

    slope: float
    stderr: float
    intercept: float
    n_points: int

    def within(self, target: float, band: float = 0.3) -> bool:
        return bool(abs(self.slope - target) <= band)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept, "n_points": self.n_points}


def fit_loglog(x, y, min_points: int = 4) -> SlopeFit:
    """Unweighted least-squares slope of ``log y`` against ``log x``.

    Non-finite or non-positive pairs are dropped first.

    Raises
    ------
    FitError
        With fewer than ``min_points`` usable points.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < min_points:
        raise FitError(f"{int(ok.sum())} usable points, need {min_points}", n_points=int(ok.sum()))
    res = stats.linregress(np.log(x[ok]), np.log(y[ok]))
    stderr = float(res.stderr) if ok.sum() > 2 else 0.0
    return SlopeFit(float(res.slope), stderr, float(res.intercept), int(ok.sum()))
