"""Synthetic anchoring experiments.

Each participant has a latent confounder ``C`` that drives both the baseline belief and the
outcome, so OLS of the outcome on the belief is biased while the randomly assigned anchor is a
valid instrument (unless ``theta`` gives the anchor a direct path to the outcome).
"""

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from abcdkit.data.datamodel import AnchorCondition, ExperimentDataset, ParticipantRecord
from abcdkit.data.schema import DatasetSchema, OutcomeSpec
from abcdkit.errors import ConfigError, DomainError
from abcdkit.logger import logger as abcd_logger
from abcdkit.simulate.rng import substream

logger = abcd_logger.getChild("dgp")

CONFOUNDER = "C"
OUTCOME = "outcome"

SIM_SCHEMA = DatasetSchema(
    condition_col="anchor",
    belief_col="belief",
    outcomes=(OutcomeSpec(OUTCOME),),
    wave_col="wave",
    day_col="day",
    id_col="id",
    covariate_cols=(CONFOUNDER,),
)

WaveDay = Union[int, Tuple[int, int]]


def _normalize_day(day) -> WaveDay:
    """A fixed day, or an inclusive (lo, hi) range drawn per participant."""
    if isinstance(day, (list, tuple)):
        return tuple(int(v) for v in day)
    return int(day)


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    beta0: float = 0.0
    beta1: float = 0.5
    gamma: float = 1.0
    delta: float = 1.0
    lam: float = 0.6
    window: Tuple[float, float] = (0.0, 100.0)
    tau: float = 7.2
    theta: float = 0.0
    sigma_belief: float = 10.0
    sigma_outcome: float = 5.0
    anchors: Tuple[float, ...] = (10.0, 90.0)
    seed: int = 20240723
    # mean baseline belief
    mu_b: float = 50.0
    no_anchor: bool = False
    wave_days: Tuple[WaveDay, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        object.__setattr__(self, "anchors", tuple(float(a) for a in self.anchors))
        object.__setattr__(self, "wave_days", tuple(map(_normalize_day, self.wave_days)))
        if self.n < 4:
            raise ConfigError(f"n must be >= 4, got {self.n}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ConfigError(f"window must be (lo, hi) with lo < hi, got {self.window}")
        if self.sigma_belief < 0 or self.sigma_outcome < 0:
            raise ConfigError("noise standard deviations must be >= 0")
        if len(set(self.anchors)) < 2:
            raise ConfigError(f"at least two distinct anchors are required, got {self.anchors}")
        if min(self.anchors) < 0:
            raise ConfigError("anchor values must be >= 0")
        if not self.wave_days:
            raise ConfigError("at least one wave is required")
        for day in self.wave_days:
            if isinstance(day, tuple) and (len(day) != 2 or day[0] > day[1]):
                raise ConfigError(f"invalid wave day range {day}")

    @property
    def high_cut(self) -> float:
        """Anchors above this value count as high for the direct effect ``theta``."""
        return (min(self.anchors) + max(self.anchors)) / 2

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "SimConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f for f in cls.__dataclass_fields__}
        if unknown := set(raw) - known:
            raise ConfigError(f"unknown simulation parameters: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SimConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"simulation config not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"simulation config {path} is not valid JSON: {e}")
        return cls.from_dict(raw)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        out["window"] = list(self.window)
        out["anchors"] = list(self.anchors)
        out["wave_days"] = [list(d) if isinstance(d, tuple) else d for d in self.wave_days]
        return out

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


def plausibility(anchor, window: Tuple[float, float]):
    """1 inside ``window``, tapering linearly to 0 over half the window width outside it."""
    lo, hi = window
    margin = (hi - lo) / 2
    anchor = np.asarray(anchor, dtype=float)
    outside = np.maximum(lo - anchor, anchor - hi)
    return np.clip(1.0 - np.maximum(outside, 0.0) / margin, 0.0, 1.0)


def anchor_response(b0, anchor, lam: float, window: Tuple[float, float]):
    """Posttreatment belief: ``b0`` pulled towards ``anchor`` by ``lam`` times its plausibility."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    b0 = np.asarray(b0, dtype=float)
    out = b0 + lam * plausibility(anchor, window) * (np.asarray(anchor, dtype=float) - b0)
    return float(out) if out.ndim == 0 else out


def decay_apply(pull, t, tau: float):
    """``pull * exp(-t / tau)``."""
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("elapsed time must be >= 0")
    out = np.asarray(pull, dtype=float) * np.exp(-t / tau)
    return float(out) if out.ndim == 0 else out


def calibrate_tau(ratio: float, lag_days: float) -> float:
    """Time constant for which ``exp(-lag_days / tau) == ratio``."""
    if not 0.0 < ratio < 1.0:
        raise DomainError(f"a decay ratio must lie in (0, 1), got {ratio}")
    if not lag_days > 0:
        raise DomainError(f"the lag must be > 0 days, got {lag_days}")
    return -lag_days / math.log(ratio)


def expected_anchoring_effect(cfg: SimConfig) -> float:
    """Population high-minus-low difference in mean wave-1 belief, for the extreme anchors."""
    lo, hi = min(cfg.anchors), max(cfg.anchors)
    pull_hi = plausibility(hi, cfg.window) * (hi - cfg.mu_b)
    pull_lo = plausibility(lo, cfg.window) * (lo - cfg.mu_b)
    return float(cfg.lam * (pull_hi - pull_lo))


@dataclass(frozen=True)
class SimulatedWave:
    """Arrays of one wave: anchors (NaN for no anchor), beliefs, outcomes and days."""

    anchors: np.ndarray
    beliefs: np.ndarray
    outcomes: np.ndarray
    confounder: np.ndarray
    days: np.ndarray

    def high(self) -> np.ndarray:
        return self.anchors == np.nanmax(self.anchors)


@dataclass(frozen=True)
class _Population:
    """Wave-independent draws of one experiment in one replicate."""

    confounder: np.ndarray
    baseline: np.ndarray
    anchors: np.ndarray
    days: Tuple[np.ndarray, ...]


def _assign_anchors(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    arms = np.array(cfg.anchors + ((math.nan,) if cfg.no_anchor else ()))
    return arms[rng.integers(0, arms.size, size=cfg.n)]


def _draw_days(cfg: SimConfig, replicate: int, label: str) -> Tuple[np.ndarray, ...]:
    days = []
    for k, day in enumerate(cfg.wave_days, start=1):
        if isinstance(day, tuple):
            rng = substream(cfg.seed, replicate, label, "day", k)
            days.append(rng.integers(day[0], day[1] + 1, size=cfg.n))
        else:
            days.append(np.full(cfg.n, day))
    for k in range(1, len(days)):
        if np.any(days[k] < days[0]):
            raise ConfigError(f"wave {k + 1} can fall before the first wave")
    return tuple(days)


def _draw_population(
    cfg: SimConfig, replicate: int, label: str, confounder: np.ndarray
) -> _Population:
    noise = substream(cfg.seed, replicate, label, "baseline").normal(size=cfg.n)
    return _Population(
        confounder=confounder,
        baseline=cfg.mu_b + cfg.delta * confounder + cfg.sigma_belief * noise,
        anchors=_assign_anchors(cfg, substream(cfg.seed, replicate, label, "anchor")),
        days=_draw_days(cfg, replicate, label),
    )


def _wave(cfg: SimConfig, pop: _Population, replicate: int, label: str, k: int) -> SimulatedWave:
    days = pop.days[k - 1]
    t = (days - pop.days[0]).astype(float)

    anchored = np.isfinite(pop.anchors)
    target = np.where(anchored, pop.anchors, pop.baseline)
    pull = anchor_response(pop.baseline, target, cfg.lam, cfg.window) - pop.baseline
    beliefs = pop.baseline + decay_apply(np.where(anchored, pull, 0.0), t, cfg.tau)

    high = anchored & (np.nan_to_num(pop.anchors) > cfg.high_cut)
    noise = substream(cfg.seed, replicate, label, "outcome", k).normal(size=cfg.n)
    outcomes = cfg.beta0 + cfg.beta1 * beliefs + cfg.gamma * pop.confounder
    outcomes = outcomes + cfg.theta * high + cfg.sigma_outcome * noise
    return SimulatedWave(pop.anchors, beliefs, outcomes, pop.confounder, days)


def _confounder(cfg: SimConfig, replicate: int) -> np.ndarray:
    return substream(cfg.seed, replicate, "confounder").normal(size=cfg.n)


def simulate_waves(cfg: SimConfig, replicate: int = 0, label: str = "main") -> List[SimulatedWave]:
    """All waves of one replicate as arrays; :func:`generate_population` wraps these."""
    pop = _draw_population(cfg, replicate, label, _confounder(cfg, replicate))
    return [_wave(cfg, pop, replicate, label, k) for k in range(1, len(cfg.wave_days) + 1)]


def _to_records(waves: Sequence[SimulatedWave]) -> List[ParticipantRecord]:
    records = []
    for k, wave in enumerate(waves, start=1):
        for i, anchor in enumerate(wave.anchors):
            if math.isnan(anchor):
                condition = AnchorCondition.none()
            else:
                condition = AnchorCondition.at(anchor)
            records.append(
                ParticipantRecord(
                    id=f"p{i + 1:05d}",
                    condition=condition,
                    belief=float(wave.beliefs[i]),
                    outcomes={OUTCOME: float(wave.outcomes[i])},
                    covariates={CONFOUNDER: float(wave.confounder[i])},
                    wave=k,
                    interview_day=int(wave.days[i]),
                )
            )
    return records


def generate_population(
    cfg: SimConfig, wave_days: Optional[Sequence[WaveDay]] = None, replicate: int = 0
) -> ExperimentDataset:
    """One simulated experiment, all waves in one dataset; deterministic in (seed, replicate).

    Beliefs in later waves keep the participant's baseline and a decayed share of the anchor's
    pull; the latent confounder is stored as the covariate ``C``.
    """
    if wave_days is not None:
        cfg = cfg.with_overrides(wave_days=tuple(wave_days))
    records = _to_records(simulate_waves(cfg, replicate))
    return ExperimentDataset(records=tuple(records), schema=SIM_SCHEMA)


def generate_placebo_panel(
    cfg: SimConfig, experiments: Sequence[str] = ("first", "second"), replicate: int = 0
) -> Dict[str, ExperimentDataset]:
    """Several experiments run on the same participants, each with independently drawn anchors.

    An anchor moves only the belief of its own experiment; the confounder is shared.
    """
    if len(experiments) < 2 or len(set(experiments)) != len(experiments):
        raise ConfigError(f"a placebo panel needs two or more distinct experiments: {experiments}")
    confounder = _confounder(cfg, replicate)
    panel = {}
    for name in experiments:
        pop = _draw_population(cfg, replicate, name, confounder)
        waves = [_wave(cfg, pop, replicate, name, k) for k in range(1, len(cfg.wave_days) + 1)]
        panel[name] = ExperimentDataset(records=tuple(_to_records(waves)), schema=SIM_SCHEMA)
    logger.debug(f"generated placebo panel {list(experiments)} (replicate {replicate})")
    return panel
