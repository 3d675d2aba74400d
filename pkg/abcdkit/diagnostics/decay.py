"""Durability of anchoring effects: lagged effects in a follow-up wave."""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from abcdkit.data.datamodel import BELIEF, ExperimentDataset, ParticipantRecord
from abcdkit.errors import DomainError, GroupingError
from abcdkit.estimate.iv import AnchoringEffect, anchoring_effect
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("decay")

DEFAULT_BINS: Tuple[Tuple[int, int], ...] = ((5, 9), (10, 14))
LISTWISE_NOTE = (
    "participants lost to follow-up are dropped listwise; no attrition weighting is applied"
)


@dataclass(frozen=True)
class LaggedEffect:
    lag_bin: Tuple[int, int]
    mean_lag: float
    effect: AnchoringEffect

    @property
    def n(self) -> int:
        return self.effect.n

    def to_dict(self) -> dict:
        return {
            "bin": list(self.lag_bin),
            "mean_lag": self.mean_lag,
            "n": self.n,
            **self.effect.to_dict(),
        }


@dataclass(frozen=True)
class EffectComparison:
    difference: float
    se: float
    z: float
    p: float

    def to_dict(self) -> dict:
        return {"difference": self.difference, "se": self.se, "z": self.z, "p": self.p}


def compare_effects(a: AnchoringEffect, b: AnchoringEffect) -> EffectComparison:
    """Two-sided z-test of ``a.effect - b.effect`` for independent samples."""
    diff = a.effect - b.effect
    se = math.hypot(a.se, b.se)
    if se == 0:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    return EffectComparison(diff, se, z, float(2 * stats.norm.sf(abs(z))))


@dataclass(frozen=True)
class DecayReport:
    instantaneous: AnchoringEffect
    lagged: Tuple[LaggedEffect, ...]
    pooled: Optional[LaggedEffect]
    matched: int
    attrition: float
    dropped_bins: Tuple[Tuple[int, int], ...] = ()
    note: str = field(default=LISTWISE_NOTE)

    @property
    def decay_ratio(self) -> Optional[float]:
        """Pooled lagged effect over the instantaneous effect."""
        if self.pooled is None or self.instantaneous.effect == 0:
            return None
        return self.pooled.effect.effect / self.instantaneous.effect

    def bin_ratios(self) -> List[float]:
        if self.instantaneous.effect == 0:
            return [math.nan for _ in self.lagged]
        return [lag.effect.effect / self.instantaneous.effect for lag in self.lagged]

    def bin_comparison(self) -> Optional[EffectComparison]:
        """First versus last lag bin."""
        if len(self.lagged) < 2:
            return None
        return compare_effects(self.lagged[0].effect, self.lagged[-1].effect)

    def decay_comparison(self) -> Optional[EffectComparison]:
        if self.pooled is None:
            return None
        return compare_effects(self.instantaneous, self.pooled.effect)

    def to_dict(self) -> dict:
        bins = self.bin_comparison()
        decay = self.decay_comparison()
        return {
            "instantaneous": self.instantaneous.to_dict(),
            "lagged": [lag.to_dict() for lag in self.lagged],
            "pooled": self.pooled.to_dict() if self.pooled else None,
            "decay_ratio": self.decay_ratio,
            "bin_ratios": self.bin_ratios(),
            "bin_comparison": bins.to_dict() if bins else None,
            "decay_comparison": decay.to_dict() if decay else None,
            "matched": self.matched,
            "attrition": self.attrition,
            "dropped_bins": [list(b) for b in self.dropped_bins],
            "note": self.note,
        }


def _check_bins(bins: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    ordered = sorted((int(lo), int(hi)) for lo, hi in bins)
    if not ordered:
        raise DomainError("at least one lag bin is required")
    for lo, hi in ordered:
        if lo > hi or lo < 0:
            raise DomainError(f"invalid lag bin [{lo}, {hi}]")
    for (_, hi), (lo, _) in zip(ordered, ordered[1:]):
        if lo <= hi:
            raise DomainError(f"lag bins overlap: {ordered}")
    return ordered


def _join(
    wave1: ExperimentDataset, wave2: ExperimentDataset
) -> Tuple[ExperimentDataset, np.ndarray]:
    """Follow-up beliefs paired with their wave-1 anchor, and each participant's lag in days."""
    first = {r.id: r for r in wave1.records if r.condition.is_anchor}
    records: List[ParticipantRecord] = []
    lags = []
    for record in wave2.records:
        origin = first.get(record.id)
        if origin is None:
            continue
        if origin.interview_day is None or record.interview_day is None:
            logger.debug(f"participant {record.id} has no interview day; dropped")
            continue
        lag = record.interview_day - origin.interview_day
        if lag < 0:
            raise DomainError(f"participant {record.id} was interviewed before the first wave")
        records.append(replace(record, condition=origin.condition))
        lags.append(lag)
    return wave2.with_records(records), np.array(lags, dtype=float)


def _lagged(
    joined: ExperimentDataset,
    lags: np.ndarray,
    mask: np.ndarray,
    lag_bin: Tuple[int, int],
    belief: str,
) -> Optional[LaggedEffect]:
    subset = joined.with_records(r for r, keep in zip(joined.records, mask) if keep)
    anchors = subset.anchors
    levels = subset.anchor_levels()
    if len(levels) != 2 or min(np.sum(anchors == lv) for lv in levels) < 2:
        return None
    try:
        effect = anchoring_effect(subset, belief)
    except GroupingError:
        return None
    return LaggedEffect(lag_bin, float(lags[mask].mean()), effect)


def decay_analysis(
    wave1: ExperimentDataset,
    wave2: ExperimentDataset,
    bins: Optional[Sequence[Tuple[int, int]]] = None,
    belief: str = BELIEF,
) -> DecayReport:
    """Instantaneous anchoring effect against lagged effects per inclusive day bin.

    Follow-up records join the first wave by id and take their anchor from it; no-anchor
    participants are left out. Bins with fewer than two participants per anchor group are
    dropped with a warning.
    """
    bins = _check_bins(bins or DEFAULT_BINS)
    instantaneous = anchoring_effect(wave1, belief)
    joined, lags = _join(wave1, wave2)

    anchored = len(wave1.anchored())
    attrition = 1.0 - len(joined) / anchored if anchored else 0.0

    lagged, dropped = [], []
    in_any = np.zeros(len(joined), dtype=bool)
    for lo, hi in bins:
        mask = (lags >= lo) & (lags <= hi)
        effect = _lagged(joined, lags, mask, (lo, hi), belief)
        if effect is None:
            logger.warning(f"lag bin {lo}-{hi} days has fewer than 2 per anchor group; dropped")
            dropped.append((lo, hi))
            continue
        lagged.append(effect)
        in_any |= mask

    pooled = None
    if lagged:
        span = (lagged[0].lag_bin[0], lagged[-1].lag_bin[1])
        pooled = _lagged(joined, lags, in_any, span, belief)

    logger.info(
        f"matched {len(joined)} of {anchored} anchored participants "
        f"({attrition:.1%} attrition); {len(lagged)} lag bins kept"
    )
    return DecayReport(
        instantaneous=instantaneous,
        lagged=tuple(lagged),
        pooled=pooled,
        matched=len(joined),
        attrition=attrition,
        dropped_bins=tuple(dropped),
    )
