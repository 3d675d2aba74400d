"""Instrumental-variable estimation with randomly assigned anchors as instruments."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from abcdkit.data.datamodel import BELIEF, ExperimentDataset
from abcdkit.errors import (
    CodingError,
    DomainError,
    GroupingError,
    NoFirstStageError,
    SingularDesignError,
    ZeroFirstStageError,
)
from abcdkit.estimate.linreg import (
    CovType,
    DesignMatrix,
    RegressionFit,
    f_test_nested,
    ols_fit,
    stars,
    t_two_sided_p,
    xtx_inverse,
)
from abcdkit.logger import logger as abcd_logger

logger = abcd_logger.getChild("iv")

F_THRESHOLD = 10.0
LOW, HIGH, NONE = "low", "high", "none"


class CodingScheme(str, Enum):
    binary = "binary"
    dummies = "dummies"
    continuous = "continuous"


@dataclass(frozen=True)
class InstrumentCoding:
    """How anchor conditions become instrument columns.

    ``binary``: one 0/1 column for the non-reference anchor (no-anchor rows are dropped).
    ``dummies``: one 0/1 column per condition other than ``reference`` (no-anchor included).
    ``continuous``: the anchor value itself (no-anchor rows are dropped).
    """

    scheme: CodingScheme = CodingScheme.binary
    reference: str = LOW

    @classmethod
    def binary(cls, reference: str = LOW) -> "InstrumentCoding":
        return cls(CodingScheme.binary, reference)

    @classmethod
    def dummies(cls, reference: str = LOW) -> "InstrumentCoding":
        return cls(CodingScheme.dummies, reference)

    @classmethod
    def continuous(cls) -> "InstrumentCoding":
        return cls(CodingScheme.continuous, "")


def default_coding(ds: ExperimentDataset) -> InstrumentCoding:
    """Binary for two-anchor designs, continuous for multivalued grids."""
    if len(ds.anchor_levels()) > 2:
        return InstrumentCoding.continuous()
    return InstrumentCoding.binary()


def condition_labels(ds: ExperimentDataset) -> List[str]:
    """Per-record labels: low/high(/none) for two-anchor designs, ``a=<value>`` otherwise."""
    levels = ds.anchor_levels()
    two_arm = len(levels) == 2

    def _label(record) -> str:
        if not record.condition.is_anchor:
            return NONE
        if two_arm:
            return HIGH if record.condition.value == levels[1] else LOW
        return f"a={record.condition.value:g}"

    return [_label(r) for r in ds.records]


def _ordered_labels(labels: Sequence[str], ds: ExperimentDataset) -> List[str]:
    present = set(labels)
    if len(ds.anchor_levels()) == 2:
        ordered = [LOW, HIGH]
    else:
        ordered = [f"a={v:g}" for v in ds.anchor_levels()]
    return [label for label in ordered + [NONE] if label in present]


@dataclass(frozen=True)
class CodedInstruments:
    mask: np.ndarray
    columns: Dict[str, np.ndarray]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self.columns)


def code_instruments(ds: ExperimentDataset, coding: InstrumentCoding) -> CodedInstruments:
    """Instrument columns over all records, and the mask of records the coding uses."""
    levels = ds.anchor_levels()
    anchored = np.array([r.condition.is_anchor for r in ds.records], dtype=bool)

    if coding.scheme is CodingScheme.binary:
        if len(levels) != 2:
            raise CodingError(f"binary coding needs exactly two anchor values, found {levels}")
        if coding.reference not in (LOW, HIGH):
            raise CodingError(f"binary reference must be {LOW!r} or {HIGH!r}")
        treated = HIGH if coding.reference == LOW else LOW
        target = levels[1] if treated == HIGH else levels[0]
        column = np.array([float(v == target) for v in ds.anchors])
        return CodedInstruments(anchored, {treated: column})

    if coding.scheme is CodingScheme.dummies:
        labels = condition_labels(ds)
        ordered = _ordered_labels(labels, ds)
        if coding.reference not in ordered:
            raise CodingError(f"reference {coding.reference!r} is not among {ordered}")
        columns = {
            label: np.array([float(lab == label) for lab in labels])
            for label in ordered
            if label != coding.reference
        }
        if not columns:
            raise CodingError("dummy coding needs at least two conditions")
        return CodedInstruments(np.ones(len(ds), dtype=bool), columns)

    if coding.scheme is CodingScheme.continuous:
        if len(levels) < 2:
            raise CodingError("continuous coding needs at least two anchor values")
        return CodedInstruments(anchored, {"anchor": np.nan_to_num(ds.anchors)})

    raise CodingError(f"unknown coding scheme {coding.scheme!r}")


@dataclass(frozen=True)
class IvFit:
    first_stage: RegressionFit
    second_stage_coefficients: Dict[str, float]
    second_stage_se: Dict[str, float]
    t_values: Dict[str, float]
    p_values: Dict[str, float]
    first_stage_f: float
    first_stage_p: float
    gate_passed: bool
    n: int
    df_resid: int
    belief: str = BELIEF
    instruments: Tuple[str, ...] = ()
    cov_type: str = "classical"
    residuals: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def coefficient(self) -> float:
        """The 2SLS effect of the belief on the outcome."""
        return self.second_stage_coefficients[self.belief]

    @property
    def se(self) -> float:
        return self.second_stage_se[self.belief]

    @property
    def p(self) -> float:
        return self.p_values[self.belief]

    def conf_int(self, level: float = 0.95) -> Tuple[float, float]:
        crit = stats.t.ppf(0.5 + level / 2, self.df_resid)
        return self.coefficient - crit * self.se, self.coefficient + crit * self.se

    def to_dict(self) -> dict:
        return {
            "coefficients": [
                {
                    "name": name,
                    "estimate": self.second_stage_coefficients[name],
                    "std_error": self.second_stage_se[name],
                    "t": self.t_values[name],
                    "p": self.p_values[name],
                    "stars": stars(self.p_values[name]),
                }
                for name in self.second_stage_coefficients
            ],
            "first_stage": self.first_stage.to_dict(),
            "first_stage_f": self.first_stage_f,
            "first_stage_p": self.first_stage_p,
            "gate_passed": self.gate_passed,
            "instruments": list(self.instruments),
            "n": self.n,
            "df_resid": self.df_resid,
            "cov_type": self.cov_type,
        }


class GateVerdict(str, Enum):
    passed = "pass"
    failed = "fail"

    def __bool__(self):
        return self is GateVerdict.passed


def weak_instrument_gate(f: float, threshold: float = F_THRESHOLD) -> GateVerdict:
    """``pass`` iff the first-stage F strictly exceeds ``threshold``."""
    if math.isnan(f) or f < 0:
        raise DomainError(f"an F statistic must be >= 0, got {f}")
    return GateVerdict.passed if f > threshold else GateVerdict.failed


def two_sls_arrays(
    y: np.ndarray,
    x: np.ndarray,
    instruments: Mapping[str, np.ndarray],
    exog: Optional[Mapping[str, np.ndarray]] = None,
    belief: str = BELIEF,
    cov_type: CovType = "classical",
    f_threshold: float = F_THRESHOLD,
) -> IvFit:
    """2SLS of ``y`` on endogenous ``x`` with the given excluded instruments.

    The coefficient covariance uses residuals against the observed ``x``, never against the
    first-stage fitted values.
    """
    exog = dict(exog or {})
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)

    for name, column in instruments.items():
        if np.ptp(column) == 0:
            raise CodingError(f"instrument {name!r} is constant in the estimation sample")

    try:
        stage1 = ols_fit(DesignMatrix.from_columns({**instruments, **exog}), x)
    except SingularDesignError as e:
        if e.column in instruments:
            raise CodingError(f"instrument {e.column!r} is collinear with the other regressors")
        raise
    restricted = ols_fit(DesignMatrix.from_columns(exog, n=len(x)), x)
    f, f_p = f_test_nested(stage1, restricted, q=len(instruments))

    x_hat = stage1.fitted
    X_hat = DesignMatrix.from_columns({belief: x_hat, **exog})
    X_obs = DesignMatrix.from_columns({belief: x, **exog})
    try:
        stage2 = ols_fit(X_hat, y)
        bread = xtx_inverse(X_hat)
    except SingularDesignError:
        raise NoFirstStageError(
            "first-stage fitted beliefs are collinear with the exogenous regressors"
        )

    beta = stage2.params
    resid = y - X_obs.values @ beta
    n, k = X_obs.n, X_obs.k
    df_resid = n - k
    if cov_type == "classical":
        cov = (resid @ resid) / df_resid * bread
    elif cov_type == "hc1":
        meat = (X_hat.values.T * resid**2) @ X_hat.values
        cov = bread @ meat @ bread * (n / df_resid)
    else:
        raise DomainError(f"unknown cov_type {cov_type!r}")

    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.copysign(np.inf, beta)))

    names = X_obs.names
    return IvFit(
        first_stage=stage1,
        second_stage_coefficients=dict(zip(names, beta.tolist())),
        second_stage_se=dict(zip(names, se.tolist())),
        t_values=dict(zip(names, t.tolist())),
        p_values={name: t_two_sided_p(tv, df_resid) for name, tv in zip(names, t)},
        first_stage_f=f,
        first_stage_p=f_p,
        gate_passed=bool(weak_instrument_gate(f, f_threshold)),
        n=n,
        df_resid=df_resid,
        belief=belief,
        instruments=tuple(instruments),
        cov_type=cov_type,
        residuals=resid,
    )


def _complete(mask: np.ndarray, *columns: np.ndarray) -> np.ndarray:
    for column in columns:
        mask = mask & np.isfinite(column)
    return mask


def two_sls(
    ds: ExperimentDataset,
    outcome: str,
    belief: str = BELIEF,
    coding: Optional[InstrumentCoding] = None,
    covariates: Sequence[str] = (),
    cov_type: CovType = "classical",
    f_threshold: float = F_THRESHOLD,
) -> IvFit:
    """2SLS of ``outcome`` on ``belief`` instrumented by the anchor conditions.

    Records missing the outcome or a covariate are dropped from this estimate only.
    """
    coding = coding or default_coding(ds)
    coded = code_instruments(ds, coding)
    y = ds.column(outcome)
    x = ds.column(belief)
    w = {name: ds.column(name) for name in covariates}
    mask = _complete(coded.mask, y, x, *w.values())

    n_instruments = len(coded.columns)
    if mask.sum() <= n_instruments + len(w) + 2:
        raise GroupingError(
            f"{int(mask.sum())} usable records are too few for "
            f"{n_instruments} instruments and {len(w)} covariates"
        )

    fit = two_sls_arrays(
        y[mask],
        x[mask],
        {name: col[mask] for name, col in coded.columns.items()},
        {name: col[mask] for name, col in w.items()},
        belief=belief,
        cov_type=cov_type,
        f_threshold=f_threshold,
    )
    logger.debug(
        f"2SLS {outcome} ~ {belief}: beta={fit.coefficient:.4g} (se {fit.se:.3g}), "
        f"first-stage F={fit.first_stage_f:.2f}, n={fit.n}"
    )
    return fit


@dataclass(frozen=True)
class FirstStage:
    fit: RegressionFit
    f: float
    p: float
    instruments: Tuple[str, ...]

    @property
    def n(self) -> int:
        return self.fit.n


def first_stage(
    ds: ExperimentDataset,
    coding: Optional[InstrumentCoding] = None,
    belief: str = BELIEF,
    covariates: Sequence[str] = (),
) -> FirstStage:
    """Regression of the belief on the instruments, with the joint F of the instruments."""
    coding = coding or default_coding(ds)
    coded = code_instruments(ds, coding)
    x = ds.column(belief)
    w = {name: ds.column(name) for name in covariates}
    mask = _complete(coded.mask, x, *w.values())

    z = {name: col[mask] for name, col in coded.columns.items()}
    for name, column in z.items():
        if np.ptp(column) == 0:
            raise CodingError(f"instrument {name!r} is constant in the estimation sample")
    w = {name: col[mask] for name, col in w.items()}
    full = ols_fit(DesignMatrix.from_columns({**z, **w}), x[mask])
    restricted = ols_fit(DesignMatrix.from_columns(w, n=int(mask.sum())), x[mask])
    f, p = f_test_nested(full, restricted, q=len(z))
    return FirstStage(full, f, p, tuple(z))


def _binary_groups(ds: ExperimentDataset, *columns: np.ndarray):
    levels = ds.anchor_levels()
    if len(levels) != 2:
        raise GroupingError(f"expected a high and a low anchor group, found anchors {levels}")
    anchors = ds.anchors
    mask = _complete(np.isfinite(anchors), *columns)
    high = anchors == levels[1]
    low = anchors == levels[0]
    high_mask, low_mask = mask & high, mask & low
    if not high_mask.any() or not low_mask.any():
        raise GroupingError("both the high and the low anchor group must be nonempty")
    return levels, low_mask, high_mask


def wald_estimate(ds: ExperimentDataset, outcome: str, belief: str = BELIEF) -> float:
    """(mean Y high - mean Y low) / (mean belief high - mean belief low)."""
    y = ds.column(outcome)
    b = ds.column(belief)
    _, low, high = _binary_groups(ds, y, b)
    delta_b = b[high].mean() - b[low].mean()
    if abs(delta_b) < 1e-12:
        raise ZeroFirstStageError("the anchor groups have the same mean belief")
    return float((y[high].mean() - y[low].mean()) / delta_b)


@dataclass(frozen=True)
class AnchoringEffect:
    effect: float
    se: float
    p: float
    f: float
    n_low: int
    n_high: int
    low_anchor: float
    high_anchor: float
    mean_low: float
    mean_high: float

    @property
    def n(self) -> int:
        return self.n_low + self.n_high

    @property
    def df_resid(self) -> int:
        return self.n - 2

    def conf_int(self, level: float = 0.95) -> Tuple[float, float]:
        crit = stats.t.ppf(0.5 + level / 2, self.df_resid)
        return self.effect - crit * self.se, self.effect + crit * self.se

    def to_dict(self) -> dict:
        lo, hi = self.conf_int()
        return {
            "effect": self.effect,
            "se": self.se,
            "p": self.p,
            "stars": stars(self.p),
            "F": self.f,
            "ci95": [lo, hi],
            "n_low": self.n_low,
            "n_high": self.n_high,
            "low_anchor": self.low_anchor,
            "high_anchor": self.high_anchor,
            "mean_low": self.mean_low,
            "mean_high": self.mean_high,
        }


def anchoring_effect(ds: ExperimentDataset, belief: str = BELIEF) -> AnchoringEffect:
    """Mean belief in the high-anchor group minus the low-anchor group, with OLS inference."""
    b = ds.column(belief)
    levels, low, high = _binary_groups(ds, b)
    mask = low | high
    fit = ols_fit(DesignMatrix.from_columns({HIGH: high[mask].astype(float)}), b[mask])
    t = fit.t_values[HIGH]
    return AnchoringEffect(
        effect=fit.coefficients[HIGH],
        se=fit.std_errors[HIGH],
        p=fit.p_values[HIGH],
        f=float(t * t),
        n_low=int(low.sum()),
        n_high=int(high.sum()),
        low_anchor=levels[0],
        high_anchor=levels[1],
        mean_low=float(b[low].mean()),
        mean_high=float(b[high].mean()),
    )


def tenfold_factor(beta: float) -> float:
    """For log10-log10 coefficients: the outcome multiplier when the belief is multiplied by 10."""
    return float(10.0**beta)


@dataclass(frozen=True)
class OutcomeResult:
    """One outcome column of a results block: OLS, IV, anchoring effect, F, N, mean and SD."""

    outcome: str
    ols: RegressionFit
    iv: Optional[IvFit]
    first_stage_f: float
    gate_passed: bool
    anchoring: Optional[AnchoringEffect]
    n: int
    mean: float
    sd: float
    belief: str = BELIEF

    def to_dict(self) -> dict:
        ols_row = {
            "estimate": self.ols.coefficients[self.belief],
            "std_error": self.ols.std_errors[self.belief],
            "p": self.ols.p_values[self.belief],
            "stars": stars(self.ols.p_values[self.belief]),
        }
        if self.iv is None:
            iv_row = {"suppressed": True, "reason": "not calculated (F <= threshold)"}
        else:
            iv_row = {
                "suppressed": False,
                "estimate": self.iv.coefficient,
                "std_error": self.iv.se,
                "p": self.iv.p,
                "stars": stars(self.iv.p),
                "tenfold_factor": tenfold_factor(self.iv.coefficient),
            }
        return {
            "outcome": self.outcome,
            "ols": ols_row,
            "iv": iv_row,
            "anchoring_effect": self.anchoring.to_dict() if self.anchoring else None,
            "first_stage_f": self.first_stage_f,
            "gate_passed": self.gate_passed,
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
        }


def results_table(
    ds: ExperimentDataset,
    outcomes: Sequence[str],
    belief: str = BELIEF,
    coding: Optional[InstrumentCoding] = None,
    covariates: Sequence[str] = (),
    cov_type: CovType = "classical",
    f_threshold: float = F_THRESHOLD,
) -> List[OutcomeResult]:
    """OLS, IV, anchoring effect, first-stage F and descriptives per outcome.

    The IV row is left out for outcomes whose first stage does not pass the gate.
    """
    coding = coding or default_coding(ds)
    try:
        anchoring = anchoring_effect(ds, belief)
    except GroupingError:
        anchoring = None

    results = []
    for outcome in outcomes:
        coded = code_instruments(ds, coding)
        y, x = ds.column(outcome), ds.column(belief)
        w = {name: ds.column(name) for name in covariates}
        mask = _complete(coded.mask, y, x, *w.values())
        ols = ols_fit(
            DesignMatrix.from_columns({belief: x[mask], **{k: v[mask] for k, v in w.items()}}),
            y[mask],
            cov_type=cov_type,
        )
        fit = two_sls(ds, outcome, belief, coding, covariates, cov_type, f_threshold)
        if not fit.gate_passed:
            logger.warning(
                f"{outcome}: first-stage F={fit.first_stage_f:.2f} does not exceed "
                f"{f_threshold:g}; IV estimate not calculated."
            )
        results.append(
            OutcomeResult(
                outcome=outcome,
                ols=ols,
                iv=fit if fit.gate_passed else None,
                first_stage_f=fit.first_stage_f,
                gate_passed=fit.gate_passed,
                anchoring=anchoring,
                n=fit.n,
                mean=float(y[mask].mean()),
                sd=float(y[mask].std(ddof=1)),
                belief=belief,
            )
        )
    return results
