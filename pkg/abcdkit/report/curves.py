"""Plot data: kernel densities, local linear smooths and effect bars."""

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, stats

from abcdkit.errors import DomainError, InsufficientDataError, ZeroSpreadError
from abcdkit.estimate.iv import AnchoringEffect
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("curves")

KDE_POINTS = 512
SMOOTHER_POINTS = 101


class CurveKind(str, Enum):
    kde = "kde"
    local_linear = "local_linear"
    effect_bar = "effect_bar"


@dataclass(frozen=True)
class CurveSeries:
    x: np.ndarray
    y: np.ndarray
    kind: CurveKind
    ci_lo: Optional[np.ndarray] = None
    ci_hi: Optional[np.ndarray] = None
    labels: Tuple[str, ...] = ()
    bandwidth: Optional[float] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for attr in ("x", "y", "ci_lo", "ci_hi"):
            value = getattr(self, attr)
            if value is not None:
                object.__setattr__(self, attr, np.asarray(value, dtype=float))
        n = self.x.size
        for attr in ("y", "ci_lo", "ci_hi"):
            value = getattr(self, attr)
            if value is not None and value.size != n:
                raise DomainError(f"{attr} has {value.size} points, x has {n}")
        if self.labels and len(self.labels) != n:
            raise DomainError(f"{len(self.labels)} labels for {n} points")
        if np.any(np.diff(self.x) <= 0):
            raise DomainError("x must be strictly increasing")

    def __len__(self):
        return self.x.size

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "x": self.x,
                "y": self.y,
                "ci_lo": self.ci_lo if self.ci_lo is not None else np.nan,
                "ci_hi": self.ci_hi if self.ci_hi is not None else np.nan,
            }
        )
        if self.labels:
            frame["label"] = list(self.labels)
        return frame

    def area(self) -> float:
        return float(integrate.trapezoid(self.y, self.x))


def write_series_csv(series: CurveSeries, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(path, index=False, lineterminator="\n", na_rep="")
    return path


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(SD, IQR / 1.34) * n ** (-1/5)."""
    values = np.asarray(values, dtype=float)
    sd = np.std(values)
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        # more than half the values tie: the IQR collapses
        spread = sd
    return float(0.9 * spread * values.size ** (-0.2))


def _finite(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    return arr


def kde(
    values: Sequence[float], bandwidth: Optional[float] = None, points: int = KDE_POINTS
) -> CurveSeries:
    """Gaussian kernel density on ``points`` grid points spanning the data +- 3 bandwidths.

    The grid cuts the kernel tails, so the density is rescaled to integrate to one over it.
    """
    x = _finite(values, "values")
    if x.size < 2:
        raise InsufficientDataError(f"a density needs at least 2 values, got {x.size}")
    if np.ptp(x) == 0:
        raise ZeroSpreadError(f"all {x.size} values equal {x[0]:g}")
    if bandwidth is None:
        h = silverman_bandwidth(x)
    elif bandwidth > 0:
        h = float(bandwidth)
    else:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth}")

    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, points)
    density = stats.norm.pdf((grid[:, None] - x[None, :]) / h).sum(axis=1) / (x.size * h)
    density /= integrate.trapezoid(density, grid)
    return CurveSeries(grid, density, CurveKind.kde, bandwidth=h)


def _local_fit(x: np.ndarray, y: np.ndarray, at: float, h: float) -> Tuple[float, float]:
    """Local linear estimate at ``at`` and its standard error."""
    u = x - at
    w = np.exp(-0.5 * (u / h) ** 2)
    X = np.column_stack([np.ones_like(u), u])
    xtw = X.T * w
    # row of the smoother matrix: e1' (X'WX)^-1 X'W
    ell = np.linalg.solve(xtw @ X, xtw)[0]
    estimate = float(ell @ y)

    fitted = X @ np.linalg.solve(xtw @ X, xtw @ y)
    resid = y - fitted
    n_eff = w.sum() ** 2 / (w**2).sum()
    if n_eff <= 2:
        return estimate, math.nan
    sigma2 = (w * resid**2).sum() / w.sum() * n_eff / (n_eff - 2)
    return estimate, float(math.sqrt(sigma2 * (ell @ ell)))


def local_linear_smooth(
    x: Sequence[float],
    y: Sequence[float],
    bandwidth: Optional[float] = None,
    points: int = SMOOTHER_POINTS,
    level: float = 0.95,
) -> CurveSeries:
    """Gaussian-weighted local linear regression on an even grid over [min x, max x].

    A window (points within two bandwidths) holding fewer than two distinct x is widened by
    doubling the bandwidth there.
    """
    x = _finite(x, "x")
    y = _finite(y, "y")
    if x.size != y.size:
        raise DomainError(f"x has {x.size} values, y has {y.size}")
    if x.size < 5:
        raise InsufficientDataError(f"the smoother needs at least 5 points, got {x.size}")
    if np.ptp(x) == 0:
        raise ZeroSpreadError("x has no spread")
    if bandwidth is None:
        h = float(np.ptp(x) / 10)
    elif bandwidth > 0:
        h = float(bandwidth)
    else:
        raise DomainError(f"bandwidth must be > 0, got {bandwidth}")

    crit = stats.norm.ppf(0.5 + level / 2)
    grid = np.linspace(x.min(), x.max(), points)
    est, lo, hi = np.empty(points), np.empty(points), np.empty(points)
    widened = 0
    for i, at in enumerate(grid):
        local_h = h
        while np.unique(x[np.abs(x - at) <= 2 * local_h]).size < 2:
            local_h *= 2
        if local_h != h:
            widened += 1
        est[i], se = _local_fit(x, y, at, local_h)
        lo[i], hi[i] = est[i] - crit * se, est[i] + crit * se

    if widened:
        logger.warning(
            f"{widened} of {points} smoother windows held fewer than 2 distinct x; widened them"
        )
    return CurveSeries(grid, est, CurveKind.local_linear, ci_lo=lo, ci_hi=hi, bandwidth=h)


def effect_bars(
    effects: Sequence[Tuple[str, AnchoringEffect]], level: float = 0.95
) -> CurveSeries:
    """Anchoring effects with their confidence intervals, one bar per labelled effect."""
    if not effects:
        raise InsufficientDataError("no effects to plot")
    labels = tuple(label for label, _ in effects)
    intervals = [effect.conf_int(level) for _, effect in effects]
    return CurveSeries(
        x=np.arange(len(effects), dtype=float),
        y=np.array([effect.effect for _, effect in effects]),
        kind=CurveKind.effect_bar,
        ci_lo=np.array([lo for lo, _ in intervals]),
        ci_hi=np.array([hi for _, hi in intervals]),
        labels=labels,
    )
