from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line through ``(log x, log y)``."""

    xs: tuple
    ys: tuple
    slope: float
    intercept: float
    max_residual: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, float) ** self.slope

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xs"], d["ys"] = list(self.xs), list(self.ys)
        return d


def fit_loglog(xs, ys) -> ScalingFit:
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    xs, ys = xs[ok], ys[ok]
    if len(xs) < 2:
        raise ValueError("need at least two positive points for a log-log fit")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    return ScalingFit(tuple(map(float, xs)), tuple(map(float, ys)), float(slope), float(intercept),
                      float(np.abs(res).max()))
