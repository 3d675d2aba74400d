import numpy as np
import pytest

from abcdkit.errors import (
    CodingError,
    DomainError,
    GroupingError,
    NoFirstStageError,
    ZeroFirstStageError,
)
from abcdkit.estimate.iv import (
    CodingScheme,
    GateVerdict,
    InstrumentCoding,
    anchoring_effect,
    code_instruments,
    condition_labels,
    default_coding,
    first_stage,
    results_table,
    tenfold_factor,
    two_sls,
    two_sls_arrays,
    wald_estimate,
    weak_instrument_gate,
)
from abcdkit.estimate.linreg import DesignMatrix, ols_fit, xtx_inverse


def _two_arm(build, seed, n=80, effect=0.7):
    rng = np.random.default_rng(seed)
    high = rng.permutation(np.repeat([0, 1], n // 2))
    beliefs = 30 + 15 * high + rng.normal(scale=8, size=n)
    outcomes = 2 + effect * beliefs + rng.normal(scale=4, size=n)
    return build(np.where(high == 1, 70.0, 5.0), beliefs, outcomes)


@pytest.mark.parametrize("seed", range(100))
def test_wald_equals_two_sls_for_binary_instrument(dataset_factory, seed):
    ds = _two_arm(dataset_factory, seed)
    fit = two_sls(ds, "y", coding=InstrumentCoding.binary())
    assert fit.coefficient == pytest.approx(wald_estimate(ds, "y"), rel=1e-10)


def test_first_stage_f_is_t_squared(binary_dataset):
    fit = two_sls(binary_dataset, "y")
    assert fit.instruments == ("high",)
    assert fit.first_stage_f == pytest.approx(fit.first_stage.t_values["high"] ** 2, rel=1e-10)

    stage = first_stage(binary_dataset)
    assert stage.f == pytest.approx(fit.first_stage_f)
    assert stage.n == 200


def test_anchoring_effect(binary_dataset):
    effect = anchoring_effect(binary_dataset)
    assert effect.mean_high - effect.mean_low == pytest.approx(effect.effect)
    assert effect.f == pytest.approx((effect.effect / effect.se) ** 2)
    assert (effect.n_low, effect.n_high) == (100, 100)
    assert (effect.low_anchor, effect.high_anchor) == (10.0, 90.0)
    assert 15 < effect.effect < 25


def test_iv_removes_confounding(binary_dataset):
    fit = two_sls(binary_dataset, "y")
    assert fit.gate_passed
    assert fit.coefficient == pytest.approx(0.5, abs=0.04)
    lo, hi = fit.conf_int()
    assert lo < fit.coefficient < hi

    X = DesignMatrix.from_columns({"belief": binary_dataset.beliefs})
    ols = ols_fit(X, binary_dataset.column("y"))
    assert ols.coefficients["belief"] > fit.coefficient


def test_covariance_uses_observed_belief(binary_dataset):
    fit = two_sls(binary_dataset, "y")
    y = binary_dataset.column("y")
    x = binary_dataset.beliefs
    resid = y - fit.second_stage_coefficients["const"] - fit.coefficient * x
    X_hat = DesignMatrix.from_columns({"belief": fit.first_stage.fitted})
    bread = xtx_inverse(X_hat)
    expected = np.sqrt(resid @ resid / (len(y) - 2) * bread[1, 1])
    assert fit.se == pytest.approx(expected, rel=1e-9)
    np.testing.assert_allclose(fit.residuals, resid)


def test_two_sls_with_instrument_equal_to_regressor():
    rng = np.random.default_rng(3)
    x = rng.normal(size=50)
    w = rng.normal(size=50)
    y = 1 + 2 * x - w + rng.normal(size=50)
    fit = two_sls_arrays(y, x, {"z": x}, {"w": w})
    ols = ols_fit(DesignMatrix.from_columns({"belief": x, "w": w}), y)
    assert fit.coefficient == pytest.approx(ols.coefficients["belief"], rel=1e-10)
    assert fit.se == pytest.approx(ols.std_errors["belief"], rel=1e-8)


def test_covariates_enter_both_stages(binary_dataset):
    fit = two_sls(binary_dataset, "y", covariates=["w"])
    assert set(fit.second_stage_coefficients) == {"const", "belief", "w"}
    assert "w" in fit.first_stage.names
    assert fit.second_stage_coefficients["w"] == pytest.approx(2.0, abs=0.5)


def test_robust_covariance(binary_dataset):
    classical = two_sls(binary_dataset, "y")
    robust = two_sls(binary_dataset, "y", cov_type="hc1")
    assert robust.coefficient == pytest.approx(classical.coefficient)
    assert robust.se != classical.se
    assert robust.cov_type == "hc1"


@pytest.mark.parametrize(
    "f, verdict",
    ((10.0, GateVerdict.failed), (10.01, GateVerdict.passed), (0.0, GateVerdict.failed)),
)
def test_weak_instrument_gate(f, verdict):
    assert weak_instrument_gate(f) is verdict


def test_gate_is_truthy_only_when_passed():
    assert weak_instrument_gate(25.0)
    assert not weak_instrument_gate(3.0)
    assert weak_instrument_gate(11.0, threshold=12.0) is GateVerdict.failed


@pytest.mark.parametrize("f", (float("nan"), -1.0))
def test_gate_rejects_invalid_statistics(f):
    with pytest.raises(DomainError):
        weak_instrument_gate(f)


def test_results_table(binary_dataset):
    (row,) = results_table(binary_dataset, ["y"])
    assert row.gate_passed
    assert row.iv is not None
    assert row.n == 200
    out = row.to_dict()
    assert out["iv"]["suppressed"] is False
    assert out["iv"]["tenfold_factor"] == pytest.approx(10 ** out["iv"]["estimate"])
    assert out["anchoring_effect"]["n_high"] == 100


def test_results_table_suppresses_weak_iv(dataset_factory, caplog):
    rng = np.random.default_rng(5)
    base = rng.normal(50, 10, size=20)
    anchors = [10.0] * 20 + [90.0] * 20
    beliefs = np.concatenate([base, base + 0.1])
    outcomes = 0.3 * beliefs + rng.normal(size=40)
    ds = dataset_factory(anchors, beliefs, outcomes)

    (row,) = results_table(ds, ["y"])
    assert not row.gate_passed
    assert row.first_stage_f <= 10
    assert row.iv is None
    assert row.to_dict()["iv"]["suppressed"] is True
    assert "IV estimate not calculated" in caplog.text


def test_identical_group_means(dataset_factory):
    ds = dataset_factory([10.0] * 4 + [90.0] * 4, [1, 2, 3, 4, 4, 3, 2, 1], range(8))
    with pytest.raises(ZeroFirstStageError):
        wald_estimate(ds, "y")
    with pytest.raises(NoFirstStageError):
        two_sls(ds, "y")


def test_binary_coding_needs_two_levels(dataset_factory):
    ds = dataset_factory([10.0, 50.0, 90.0] * 4, range(12), range(12))
    with pytest.raises(CodingError):
        code_instruments(ds, InstrumentCoding.binary())
    with pytest.raises(GroupingError):
        wald_estimate(ds, "y")
    assert default_coding(ds).scheme is CodingScheme.continuous


def test_dummies_with_no_anchor_arm(dataset_factory):
    ds = dataset_factory([10.0, 90.0, None] * 3, range(9))
    assert condition_labels(ds)[:3] == ["low", "high", "none"]

    coded = code_instruments(ds, InstrumentCoding.dummies())
    assert coded.names == ("high", "none")
    assert coded.mask.all()
    np.testing.assert_array_equal(coded.columns["none"], [0, 0, 1] * 3)

    coded = code_instruments(ds, InstrumentCoding.dummies(reference="none"))
    assert coded.names == ("low", "high")

    binary = code_instruments(ds, InstrumentCoding.binary())
    np.testing.assert_array_equal(binary.mask, [True, True, False] * 3)

    with pytest.raises(CodingError):
        code_instruments(ds, InstrumentCoding.dummies(reference="medium"))


def test_continuous_coding_drops_no_anchor(dataset_factory):
    ds = dataset_factory([10.0, 50.0, 90.0, None] * 2, range(8))
    coded = code_instruments(ds, InstrumentCoding.continuous())
    assert coded.names == ("anchor",)
    np.testing.assert_array_equal(coded.mask, [True, True, True, False] * 2)
    assert condition_labels(ds)[:4] == ["a=10", "a=50", "a=90", "none"]


def test_too_few_records(dataset_factory):
    ds = dataset_factory([10.0, 90.0, 10.0], [1, 5, 2], [1, 2, 3])
    with pytest.raises(GroupingError):
        two_sls(ds, "y")


def test_tenfold_factor():
    assert tenfold_factor(0.283) == pytest.approx(1.9187, abs=1e-4)
    assert tenfold_factor(0.0) == 1.0


def test_identical_beliefs_have_no_anchoring_effect(dataset_factory):
    ds = dataset_factory([10.0] * 6 + [90.0] * 6, [0.3] * 12, range(12))
    effect = anchoring_effect(ds)
    assert effect.effect == 0.0
    assert (effect.f, effect.p) == (0.0, 1.0)
    assert first_stage(ds, InstrumentCoding.binary()).f == 0.0


def test_swapping_anchor_labels(binary_dataset):
    high = two_sls(binary_dataset, "y", coding=InstrumentCoding.binary(reference="low"))
    low = two_sls(binary_dataset, "y", coding=InstrumentCoding.binary(reference="high"))
    assert (high.instruments, low.instruments) == (("high",), ("low",))
    assert low.first_stage.coefficients["low"] == pytest.approx(
        -high.first_stage.coefficients["high"], rel=1e-10
    )
    assert low.coefficient == pytest.approx(high.coefficient, rel=1e-10)
    assert low.se == pytest.approx(high.se, rel=1e-10)
    assert low.p == pytest.approx(high.p, rel=1e-10)
    assert low.first_stage_f == pytest.approx(high.first_stage_f, rel=1e-10)
