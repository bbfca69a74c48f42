"""Log-log rate fits with optional |ln x|^k factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import PreconditionError

LOG_POWERS = (0, 1, 2)
# Relative scatter (RMS in log space) below which two fits are indistinguishable.
NOISE_FLOOR = 0.02
DISCRIMINATION_RATIO = 2.0


@dataclass(frozen=True)
class RateFit:
    exponent: float
    log_power: int
    residual: float
    intercept: float
    ci95: tuple[float, float]
    residuals_by_power: dict[int, float]
    status: str  # "ok" | "inconclusive"

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_power": self.log_power,
            "residual": self.residual,
            "intercept": self.intercept,
            "ci95": list(self.ci95),
            "residuals_by_power": {str(k): v for k, v in self.residuals_by_power.items()},
            "status": self.status,
        }


def _loglog(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float, tuple[float, float]]:
    res = stats.linregress(lx, ly)
    pred = res.intercept + res.slope * lx
    rms = float(np.sqrt(np.mean((ly - pred) ** 2)))
    dof = lx.size - 2
    half = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return float(res.slope), float(res.intercept), rms, (res.slope - half, res.slope + half)


def fit_rate(x, y, model: str = "power") -> RateFit:
    """Fit y ~ C x^p |ln x|^k by least squares in log-log coordinates.

    model="power" fixes k = 0; model="power-log" tries k in {0, 1, 2} and
    keeps the smallest residual.  The fit is "inconclusive" when the
    runner-up's residual, floored at NOISE_FLOOR, is within a factor
    DISCRIMINATION_RATIO of the winner's.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise PreconditionError("fit_rate needs at least four (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise PreconditionError("fit_rate needs positive x and y")
    if model not in ("power", "power-log"):
        raise PreconditionError(f"unknown model {model!r}")
    lx = np.log(x)
    powers = (0,) if model == "power" else LOG_POWERS
    if model == "power-log" and np.any(np.isclose(x, 1.0)):
        raise PreconditionError("x = 1 makes |ln x| vanish")
    fits = {}
    for k in powers:
        ly = np.log(y) - k * np.log(np.abs(lx)) if k else np.log(y)
        fits[k] = _loglog(lx, ly)
    best = min(fits, key=lambda k: fits[k][2])
    slope, icpt, rms, ci = fits[best]
    status = "ok"
    if len(fits) > 1:
        ranked = sorted(max(f[2], NOISE_FLOOR) for f in fits.values())
        if ranked[1] / ranked[0] < DISCRIMINATION_RATIO:
            status = "inconclusive"
    return RateFit(slope, best, rms, icpt, ci, {k: f[2] for k, f in fits.items()}, status)
