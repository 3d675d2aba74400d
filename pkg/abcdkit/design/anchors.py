"""Choosing anchor values: response curves, extrema, percentiles and plan efficiency."""

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from abcdkit.data.datamodel import BeliefTransform, ExperimentDataset
from abcdkit.errors import (
    DegenerateBaselineError,
    DegenerateCurveError,
    DomainError,
    ExtrapolationError,
    InsufficientDataError,
    UnderdeterminedError,
)
from abcdkit.estimate.linreg import DesignMatrix, ols_fit
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("design")

GRIDS_DIR = Path(__file__).parent / "grids"
# imaginary parts below this are treated as rounding noise of a real root
_IMAG_TOLERANCE = 1e-12


class AnchorScale(str, Enum):
    raw = "raw"
    log10p1 = "log10p1"


class PlanRule(str, Enum):
    percentile = "percentile"
    curve_extrema = "extrema"


def to_scale(anchor, scale: AnchorScale):
    """Map raw anchor values onto ``scale``."""
    if AnchorScale(scale) is AnchorScale.log10p1:
        return np.log1p(anchor) / np.log(10)
    return anchor


def to_raw(x, scale: AnchorScale):
    """Inverse of :func:`to_scale`."""
    if AnchorScale(scale) is AnchorScale.log10p1:
        return np.power(10.0, x) - 1.0
    return x


@dataclass(frozen=True)
class ResponseCurve:
    """Mean posttreatment belief as a polynomial of the anchor, on ``anchor_scale``."""

    coefficients: Tuple[float, ...]
    anchor_scale: AnchorScale
    domain: Tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError(f"curve domain must have lo < hi, got {self.domain}")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def contains(self, x: float) -> bool:
        lo, hi = self.domain
        span = hi - lo
        return lo - 1e-12 * span <= x <= hi + 1e-12 * span

    def __call__(self, x: float) -> float:
        return float(self.polynomial(x))

    def to_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "anchor_scale": self.anchor_scale.value,
            "domain": list(self.domain),
        }


def fit_response_polynomial(
    pilot: ExperimentDataset, degree: int = 3, scale: AnchorScale = AnchorScale.raw
) -> ResponseCurve:
    """Least-squares polynomial of the belief on the anchor.

    Anchors are mapped onto ``scale`` unless the dataset was already log10p1-transformed, in
    which case they are on that scale already and ``scale`` must agree.
    """
    scale = AnchorScale(scale)
    if any(not r.condition.is_anchor for r in pilot.records):
        raise DomainError("every pilot record must carry an anchor")

    anchors = pilot.anchors
    if pilot.belief_transform is BeliefTransform.log10p1:
        if scale is not AnchorScale.log10p1:
            raise DomainError("pilot anchors are log10p1-transformed; fit on the log10p1 scale")
        x = anchors
    else:
        x = to_scale(anchors, scale)

    distinct = np.unique(x)
    if distinct.size < degree + 1:
        raise UnderdeterminedError(
            f"{distinct.size} distinct anchors cannot determine a degree-{degree} curve"
        )
    if distinct.size < degree + 2:
        logger.warning(
            f"only {distinct.size} distinct anchors for a degree-{degree} curve; "
            f"the fit interpolates."
        )

    powers = {f"x^{p}": x**p for p in range(1, degree + 1)}
    fit = ols_fit(DesignMatrix.from_columns(powers), pilot.beliefs)
    coefficients = tuple(fit.params)
    logger.info(f"fitted response curve {coefficients} on the {scale.value} scale (n={fit.n})")
    return ResponseCurve(coefficients, scale, (float(distinct[0]), float(distinct[-1])))


@dataclass(frozen=True)
class CurveExtrema:
    argmin: float
    argmax: float
    # no interior critical point: both locations are domain endpoints
    monotone: bool = False


def _better_endpoint(curve: ResponseCurve, maximize: bool) -> float:
    lo, hi = curve.domain
    if maximize:
        return lo if curve(lo) > curve(hi) else hi
    return lo if curve(lo) < curve(hi) else hi


def curve_extrema(curve: ResponseCurve) -> CurveExtrema:
    """Locations of the curve's local minimum and maximum, on the curve's scale.

    Critical points outside the domain are replaced by the better domain endpoint.
    """
    if curve.degree > 3:
        raise DomainError(f"extrema are defined for curves up to degree 3, not {curve.degree}")
    poly = curve.polynomial
    slope = poly.deriv()
    if np.allclose(slope.coef, 0.0, atol=0.0):
        raise DegenerateCurveError("the curve is flat; it has no extrema")

    roots = slope.roots() if slope.degree() > 0 else np.array([])
    real = [float(np.real(r)) for r in roots if abs(np.imag(r)) <= _IMAG_TOLERANCE]
    curvature = slope.deriv()

    argmin = argmax = None
    for root in real:
        if not curve.contains(root):
            continue
        bend = curvature(root)
        if bend > 0 and argmin is None:
            argmin = root
        elif bend < 0 and argmax is None:
            argmax = root

    monotone = not real
    if argmin is None:
        argmin = _better_endpoint(curve, maximize=False)
    if argmax is None:
        argmax = _better_endpoint(curve, maximize=True)
    return CurveExtrema(argmin=argmin, argmax=argmax, monotone=monotone)


def predicted_mean_belief(curve: ResponseCurve, anchor: float) -> float:
    """Curve value at ``anchor``, given on the curve's scale."""
    if not curve.contains(anchor):
        raise ExtrapolationError(f"anchor {anchor:g} is outside the curve domain {curve.domain}")
    return curve(anchor)


def anchor_percentile(anchor: float, baseline: Sequence[float]) -> float:
    """Share of baseline beliefs at or below ``anchor``, in percent (no interpolation)."""
    baseline = np.asarray(baseline, dtype=float)
    if baseline.size == 0:
        raise InsufficientDataError("the baseline distribution is empty")
    return float(100.0 * np.count_nonzero(baseline <= anchor) / baseline.size)


def design_variance_ratio(delta_a: float, delta_b: float) -> float:
    """``(delta_a / delta_b) ** 2``: IV variance of design B relative to design A.

    The IV variance scales with the inverse squared first-stage belief difference.
    """
    if not (delta_a > 0 and delta_b > 0):
        raise DomainError(f"belief differences must be > 0, got {delta_a} and {delta_b}")
    return (delta_a / delta_b) ** 2


@dataclass(frozen=True)
class AnchorPlan:
    low: float
    high: float
    rule: PlanRule
    predicted_beliefs: Optional[Tuple[float, float]] = None
    percentiles: Optional[Tuple[float, float]] = None
    curve: Optional[ResponseCurve] = None

    @property
    def predicted_delta(self) -> Optional[float]:
        if self.predicted_beliefs is None:
            return None
        low, high = self.predicted_beliefs
        return high - low

    def to_dict(self) -> dict:
        return {
            "rule": self.rule.value,
            "low": self.low,
            "high": self.high,
            "predicted_beliefs": list(self.predicted_beliefs) if self.predicted_beliefs else None,
            "predicted_delta": self.predicted_delta,
            "percentiles": list(self.percentiles) if self.percentiles else None,
            "curve": self.curve.to_dict() if self.curve else None,
        }


def compare_plans(plan: AnchorPlan, reference: AnchorPlan) -> float:
    """IV variance under ``reference`` relative to ``plan``, from their predicted deltas."""
    if plan.predicted_delta is None or reference.predicted_delta is None:
        raise DomainError("both plans need predicted beliefs to be compared")
    return design_variance_ratio(plan.predicted_delta, reference.predicted_delta)


def _predict(curve: ResponseCurve, raw_anchor: float) -> Optional[float]:
    x = float(to_scale(raw_anchor, curve.anchor_scale))
    if not curve.contains(x):
        logger.info(f"anchor {raw_anchor:g} lies outside the pilot curve; no prediction")
        return None
    return curve(x)


def recommend_anchors(
    baseline: Optional[Sequence[float]],
    rule: PlanRule = PlanRule.percentile,
    pilot: Optional[ExperimentDataset] = None,
    scale: AnchorScale = AnchorScale.raw,
    degree: int = 3,
    percentiles: Tuple[float, float] = (5.0, 95.0),
    min_baseline: int = 20,
) -> AnchorPlan:
    """Recommend a (low, high) anchor pair, on the raw anchor scale.

    The percentile rule takes empirical percentiles of the baseline (no-anchor) beliefs; the
    extrema rule takes the extrema of a polynomial fitted to multivalued pilot data.
    """
    rule = PlanRule(rule)
    base = np.asarray(baseline if baseline is not None else [], dtype=float)
    curve = fit_response_polynomial(pilot, degree, scale) if pilot is not None else None

    if rule is PlanRule.percentile:
        if base.size < min_baseline:
            raise InsufficientDataError(
                f"the percentile rule needs at least {min_baseline} baseline beliefs, "
                f"got {base.size}"
            )
        if np.ptp(base) == 0:
            raise DegenerateBaselineError("the baseline beliefs are all equal")
        low, high = np.quantile(base, [p / 100 for p in percentiles], method="inverted_cdf")
        low, high = float(low), float(high)
    else:
        if curve is None:
            raise DomainError("the extrema rule needs multivalued pilot data")
        extrema = curve_extrema(curve)
        if extrema.monotone:
            logger.warning("the pilot curve has no interior extrema; recommending its endpoints")
        low = float(to_raw(extrema.argmin, curve.anchor_scale))
        high = float(to_raw(extrema.argmax, curve.anchor_scale))
        if base.size and np.ptp(base) == 0:
            raise DegenerateBaselineError("the baseline beliefs are all equal")

    if low > high:
        logger.warning(
            f"the curve decreases between its extrema; swapping to low={high:g}, high={low:g}"
        )
        low, high = high, low

    predicted = None
    if curve is not None:
        b_low, b_high = _predict(curve, low), _predict(curve, high)
        if b_low is not None and b_high is not None:
            predicted = (b_low, b_high)

    pct = None
    if base.size:
        pct = (anchor_percentile(low, base), anchor_percentile(high, base))

    return AnchorPlan(
        low=low, high=high, rule=rule, predicted_beliefs=predicted, percentiles=pct, curve=curve
    )


def load_grid(name: str) -> List[float]:
    """One of the bundled multivalued anchor grids: ``recession`` or ``donation``."""
    path = GRIDS_DIR / f"{name}.csv"
    if not path.exists():
        known = sorted(p.stem for p in GRIDS_DIR.glob("*.csv"))
        raise DomainError(f"unknown anchor grid {name!r}; known grids: {known}")
    frame = pd.read_csv(path, keep_default_na=False, dtype={"anchor": float})
    if "note" in frame.columns:
        for anchor, note in zip(frame["anchor"], frame["note"]):
            if note:
                logger.warning(f"grid {name}: anchor {anchor:g} {note}")
    grid = [float(a) for a in frame["anchor"]]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError(f"grid {name} is not strictly increasing")
    return grid


def calibrate_grid_plan(
    grid: Sequence[float], curve: ResponseCurve
) -> Tuple[float, float, float]:
    """Best (low, high) pair drawn from ``grid`` by predicted belief difference."""
    best = (math.nan, math.nan, -math.inf)
    for i, lo in enumerate(grid):
        b_lo = _predict(curve, lo)
        if b_lo is None:
            continue
        for hi in grid[i + 1 :]:
            b_hi = _predict(curve, hi)
            if b_hi is not None and b_hi - b_lo > best[2]:
                best = (lo, hi, b_hi - b_lo)
    return best
