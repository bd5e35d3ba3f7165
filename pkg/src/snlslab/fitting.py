"""Log-log least squares with bootstrap confidence intervals."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .parallel import stream_rng


@dataclass
class FitReport:
    """Outcome of a power-law fit ``y ~ exp(intercept) * x**exponent_hat``."""

    exponent_hat: float
    exponent_predicted: float | None
    intercept: float
    r_squared: float
    n_points: int
    ci_95: tuple[float, float]
    residual: float = 0.0
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["ci_95"] = list(self.ci_95)
        return out

    def to_json(self) -> str:
        return json.dumps(_clean(self.as_dict()), sort_keys=True, indent=2)


def _clean(obj):
    """Make floats JSON-safe (inf/nan become strings) and numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def jsonable(obj):
    return _clean(obj)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - y.mean())) / sxx
    return float(slope), float(y.mean() - slope * xm)


def fit_power_law(xs, ys, *, y_err=None, n_boot: int = 2000, seed: int = 0,
                  predicted: float | None = None) -> FitReport:
    """Least-squares line through (log x, log y).

    The 95% interval is a percentile bootstrap: pairs are resampled, or, when
    relative errors ``y_err / y`` are supplied, the log-ordinates are redrawn
    from independent normals of those widths.  The interval is widened if
    needed so it always contains the point estimate.
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    if len(xs) < 4:
        raise ValueError("a power-law fit needs at least 4 points")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("power-law fits need strictly positive, finite data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = _ols(lx, ly)
    resid = ly - (intercept + slope * lx)
    sst = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if sst == 0 else float(np.clip(1.0 - np.sum(resid ** 2) / sst, 0.0, 1.0))

    rng = stream_rng(seed, "fit-bootstrap")
    boots = []
    n = len(lx)
    if y_err is not None:
        rel = np.asarray(y_err, float) / ys
        for _ in range(n_boot):
            boots.append(_ols(lx, ly + rel * rng.standard_normal(n))[0])
    else:
        for _ in range(n_boot):
            idx = rng.integers(0, n, n)
            if np.ptp(lx[idx]) == 0:
                continue
            boots.append(_ols(lx[idx], ly[idx])[0])
    lo, hi = np.percentile(boots, [2.5, 97.5]) if boots else (slope, slope)
    ci = (float(min(lo, slope)), float(max(hi, slope)))
    return FitReport(
        exponent_hat=slope,
        exponent_predicted=predicted,
        intercept=intercept,
        r_squared=r2,
        n_points=n,
        ci_95=ci,
        residual=float(np.sqrt(np.mean(resid ** 2))),
    )
