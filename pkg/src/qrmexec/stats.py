"""Welch's unequal-variance t-test, one-sided."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import stats as _st


class WelchResult(NamedTuple):
    t: float
    df: float
    p: float

    @property
    def stars(self) -> str:
        return significance_stars(self.p)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def welch_one_sided(x, y) -> WelchResult:
    """Test ``mean(x) > mean(y)`` without assuming equal variances.

    Degrees of freedom follow Welch-Satterthwaite.  Two constant samples
    give ``t = +-inf`` (p of 0 or 1) when their means differ and ``p = 0.5``
    when they agree.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    nx, ny = x.size, y.size
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(ddof=1) / nx, y.var(ddof=1) / ny
    se2 = vx + vy
    diff = mx - my
    if se2 == 0.0:
        if diff == 0.0:
            return WelchResult(0.0, float("nan"), 0.5)
        return WelchResult(math.copysign(math.inf, diff), float("nan"), 0.0 if diff > 0 else 1.0)
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (vx * vx / (nx - 1) + vy * vy / (ny - 1))
    return WelchResult(float(t), float(df), float(_st.t.sf(t, df)))
