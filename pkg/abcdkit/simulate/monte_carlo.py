"""Monte Carlo harness: bias, spread and confidence-interval coverage of the estimators."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from abcdkit.data.datamodel import BELIEF
from abcdkit.errors import CodingError, ConfigError, NoFirstStageError, ZeroFirstStageError
from abcdkit.estimate.iv import two_sls_arrays
from abcdkit.estimate.linreg import DesignMatrix, ols_fit
from abcdkit.logger import logger as abcd_logger
from abcdkit.simulate.dgp import (
    SimConfig,
    SimulatedWave,
    expected_anchoring_effect,
    simulate_waves,
)

logger = abcd_logger.getChild("monte_carlo")

MIN_REPLICATES = 100
FAILURE_WARNING_SHARE = 0.05


class Estimator(str, Enum):
    ols = "ols"
    iv = "iv"
    wald = "wald"


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    ci: Tuple[float, float]


@dataclass(frozen=True)
class ReplicateResult:
    index: int
    estimates: Dict[Estimator, Estimate]
    failures: Tuple[Estimator, ...]
    ols_bias: float
    iv_bias: float
    first_stage_f: float
    anchoring_effect: float


def _ci(value: float, se: float, df: int) -> Tuple[float, float]:
    crit = stats.t.ppf(0.975, df)
    return value - crit * se, value + crit * se


def _instrument(cfg: SimConfig, wave: SimulatedWave, mask: np.ndarray) -> Dict[str, np.ndarray]:
    if len(set(cfg.anchors)) == 2:
        return {"high": wave.high()[mask].astype(float)}
    return {"anchor": wave.anchors[mask]}


def _in_sample_bias(weight: float, driver: np.ndarray, z: np.ndarray, x: np.ndarray) -> float:
    """``weight * cov(z, driver) / cov(z, x)``: the bias an omitted ``driver`` leaves."""
    denominator = np.cov(z, x)[0, 1]
    if weight == 0:
        return 0.0
    if denominator == 0:
        return math.nan
    return float(weight * np.cov(z, driver)[0, 1] / denominator)


def run_replicate(cfg: SimConfig, index: int, estimators: Iterable[Estimator]) -> ReplicateResult:
    """Generate replicate ``index`` and apply each estimator to its first wave."""
    estimators = [Estimator(e) for e in estimators]
    wave = simulate_waves(cfg, index)[0]
    y, x = wave.outcomes, wave.beliefs

    estimates: Dict[Estimator, Estimate] = {}
    failures: List[Estimator] = []

    if Estimator.ols in estimators:
        fit = ols_fit(DesignMatrix.from_columns({BELIEF: x}), y)
        value, se = fit.coefficients[BELIEF], fit.std_errors[BELIEF]
        estimates[Estimator.ols] = Estimate(value, se, _ci(value, se, fit.df_resid))

    mask = np.isfinite(wave.anchors)
    instruments = _instrument(cfg, wave, mask)
    (z,) = instruments.values()
    high = wave.anchors[mask] > cfg.high_cut

    f = math.nan
    anchoring = math.nan
    if high.any() and (~high).any():
        anchoring = float(x[mask][high].mean() - x[mask][~high].mean())
    iv_fit = None
    if Estimator.iv in estimators or Estimator.wald in estimators:
        try:
            iv_fit = two_sls_arrays(y[mask], x[mask], instruments)
            f = iv_fit.first_stage_f
        except (NoFirstStageError, CodingError) as e:
            logger.debug(f"replicate {index}: no first stage ({e})")

    if Estimator.iv in estimators:
        if iv_fit is None:
            failures.append(Estimator.iv)
        else:
            estimates[Estimator.iv] = Estimate(iv_fit.coefficient, iv_fit.se, iv_fit.conf_int())

    if Estimator.wald in estimators:
        try:
            if len(set(cfg.anchors)) != 2 or iv_fit is None:
                raise ZeroFirstStageError("the Wald estimator needs a binary first stage")
            delta_b = x[mask][high].mean() - x[mask][~high].mean()
            if abs(delta_b) < 1e-12:
                raise ZeroFirstStageError("the anchor groups have the same mean belief")
            value = (y[mask][high].mean() - y[mask][~high].mean()) / delta_b
            # equals the 2SLS estimate for one binary instrument
            estimates[Estimator.wald] = Estimate(
                float(value), iv_fit.se, _ci(float(value), iv_fit.se, iv_fit.df_resid)
            )
        except NoFirstStageError:
            failures.append(Estimator.wald)

    return ReplicateResult(
        index=index,
        estimates=estimates,
        failures=tuple(failures),
        ols_bias=_in_sample_bias(cfg.gamma, wave.confounder, x, x),
        iv_bias=_in_sample_bias(cfg.theta, high.astype(float), z, x[mask]),
        first_stage_f=f,
        anchoring_effect=anchoring,
    )


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: Estimator
    mean: float
    sd: float
    mean_se: float
    bias: float
    coverage: float
    replicates: int
    failures: int

    @property
    def mc_se(self) -> float:
        """Monte Carlo standard error of ``mean``."""
        return self.sd / math.sqrt(self.replicates) if self.replicates else math.nan

    @property
    def variance(self) -> float:
        return self.sd**2

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator.value,
            "mean": self.mean,
            "sd": self.sd,
            "mean_se": self.mean_se,
            "bias": self.bias,
            "mc_se": self.mc_se,
            "coverage": self.coverage,
            "replicates": self.replicates,
            "failures": self.failures,
        }


@dataclass(frozen=True)
class McSummary:
    config: SimConfig
    replicates: int
    truth: float
    estimators: Dict[Estimator, EstimatorSummary]
    analytic_ols_bias: float
    analytic_iv_bias: float
    mean_first_stage_f: float
    mean_anchoring_effect: float
    anchoring_effect_mc_se: float
    expected_anchoring_effect: float
    failure_share: float
    results: Tuple[ReplicateResult, ...] = field(default=(), repr=False, compare=False)

    def __getitem__(self, estimator) -> EstimatorSummary:
        return self.estimators[Estimator(estimator)]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "replicates": self.replicates,
            "truth": self.truth,
            "estimators": {e.value: s.to_dict() for e, s in self.estimators.items()},
            "analytic_ols_bias": self.analytic_ols_bias,
            "analytic_iv_bias": self.analytic_iv_bias,
            "mean_first_stage_f": self.mean_first_stage_f,
            "mean_anchoring_effect": self.mean_anchoring_effect,
            "anchoring_effect_mc_se": self.anchoring_effect_mc_se,
            "expected_anchoring_effect": self.expected_anchoring_effect,
            "failure_share": self.failure_share,
        }


def _summarize(
    estimator: Estimator, results: List[ReplicateResult], truth: float
) -> EstimatorSummary:
    ok = [r.estimates[estimator] for r in results if estimator in r.estimates]
    failures = sum(estimator in r.failures for r in results)
    if not ok:
        nan = math.nan
        return EstimatorSummary(estimator, nan, nan, nan, nan, nan, 0, failures)
    values = np.array([e.value for e in ok])
    covered = [lo <= truth <= hi for lo, hi in (e.ci for e in ok)]
    mean = float(values.mean())
    return EstimatorSummary(
        estimator=estimator,
        mean=mean,
        sd=float(values.std(ddof=1)) if values.size > 1 else 0.0,
        mean_se=float(np.mean([e.se for e in ok])),
        bias=mean - truth,
        coverage=float(np.mean(covered)),
        replicates=len(ok),
        failures=failures,
    )


def _nanmean(values: Iterable[float]) -> float:
    arr = np.array(list(values), dtype=float)
    return float(np.nanmean(arr)) if np.isfinite(arr).any() else math.nan


def monte_carlo(
    cfg: SimConfig,
    replicates: int = 1000,
    estimators: Iterable[Estimator] = tuple(Estimator),
    n_jobs: int = 1,
    failure_warning_share: float = FAILURE_WARNING_SHARE,
    min_replicates: int = MIN_REPLICATES,
    keep_results: bool = False,
) -> McSummary:
    """Run ``replicates`` independent simulations and summarize each estimator.

    Replicate ``i`` draws from substreams keyed on (seed, i) only, so the summary does not
    depend on ``n_jobs``.
    """
    if replicates < min_replicates:
        raise ConfigError(f"at least {min_replicates} replicates are required, got {replicates}")
    estimators = tuple(Estimator(e) for e in estimators)
    if not estimators:
        raise ConfigError("no estimators requested")

    logger.info(f"running {replicates} replicates of n={cfg.n} on {n_jobs} worker(s)")
    results: List[ReplicateResult] = Parallel(n_jobs=n_jobs)(
        delayed(run_replicate)(cfg, i, estimators) for i in range(replicates)
    )

    failed = sum(1 for r in results if r.failures)
    failure_share = failed / replicates
    if failure_share > failure_warning_share:
        logger.warning(
            f"{failed} of {replicates} replicates ({failure_share:.1%}) had no usable first "
            f"stage; the anchors barely move beliefs under this configuration."
        )

    effects = np.array([r.anchoring_effect for r in results], dtype=float)
    effects = effects[np.isfinite(effects)]
    return McSummary(
        config=cfg,
        replicates=replicates,
        truth=cfg.beta1,
        estimators={e: _summarize(e, results, cfg.beta1) for e in estimators},
        analytic_ols_bias=_nanmean(r.ols_bias for r in results),
        analytic_iv_bias=_nanmean(r.iv_bias for r in results),
        mean_first_stage_f=_nanmean(r.first_stage_f for r in results),
        mean_anchoring_effect=float(effects.mean()) if effects.size else math.nan,
        anchoring_effect_mc_se=(
            float(effects.std(ddof=1) / math.sqrt(effects.size)) if effects.size > 1 else math.nan
        ),
        expected_anchoring_effect=expected_anchoring_effect(cfg),
        failure_share=failure_share,
        results=tuple(results) if keep_results else (),
    )


def summary_rows(summary: McSummary) -> List[Tuple[str, ...]]:
    """Formatted table rows, one per estimator."""
    rows = []
    for estimator, s in summary.estimators.items():
        rows.append(
            (
                estimator.value,
                f"{s.mean:.4f}",
                f"{s.bias:+.4f}",
                f"{s.mc_se:.4f}",
                f"{s.sd:.4f}",
                f"{s.mean_se:.4f}",
                f"{s.coverage:.3f}",
                str(s.failures),
            )
        )
    return rows


def variance_ratio(a: McSummary, b: McSummary, estimator: Estimator = Estimator.iv) -> float:
    """Empirical variance of ``estimator`` under ``a`` relative to ``b``."""
    return a[estimator].variance / b[estimator].variance

