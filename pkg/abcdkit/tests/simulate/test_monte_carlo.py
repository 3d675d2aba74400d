import pytest

from abcdkit.design.anchors import design_variance_ratio
from abcdkit.errors import ConfigError
from abcdkit.simulate.dgp import SimConfig
from abcdkit.simulate.monte_carlo import (
    Estimator,
    monte_carlo,
    run_replicate,
    summary_rows,
    variance_ratio,
)

# weak pull and a strong confounder, so OLS is visibly biased in small samples
CONFOUNDED = SimConfig(lam=0.2, delta=10.0, sigma_belief=2.0, gamma=2.0)
SMALL = CONFOUNDED.with_overrides(n=200, seed=11)
# beta1 .5, gamma 1, delta 1, lambda .6, n 1000; close anchors and little outcome noise keep
# the OLS bias large against its Monte Carlo error
REFERENCE = SimConfig(
    n=1000, beta1=0.5, gamma=1.0, delta=1.0, lam=0.6, anchors=(40.0, 60.0), sigma_outcome=1.0
)


def test_replicate():
    result = run_replicate(SMALL, 3, tuple(Estimator))
    assert result.index == 3
    assert result.failures == ()
    assert set(result.estimates) == set(Estimator)
    wald, iv = result.estimates[Estimator.wald], result.estimates[Estimator.iv]
    assert wald.value == pytest.approx(iv.value, rel=1e-9)
    assert wald.se == iv.se
    assert result.first_stage_f > 10
    assert result.ols_bias > 0
    assert result.iv_bias == 0.0
    lo, hi = iv.ci
    assert lo < iv.value < hi


def test_results_do_not_depend_on_workers():
    serial = monte_carlo(SMALL, replicates=6, n_jobs=1, min_replicates=1)
    parallel = monte_carlo(SMALL, replicates=6, n_jobs=2, min_replicates=1)
    assert serial.to_dict() == parallel.to_dict()
    assert monte_carlo(SMALL.with_overrides(seed=12), 6, min_replicates=1).to_dict() != (
        serial.to_dict()
    )


def test_summary():
    summary = monte_carlo(SMALL, replicates=5, min_replicates=1, keep_results=True)
    assert summary.replicates == 5
    assert summary.truth == 0.5
    assert len(summary.results) == 5
    assert summary["iv"].replicates == 5
    assert summary.expected_anchoring_effect == pytest.approx(16.0)
    assert summary.failure_share == 0.0
    rows = summary_rows(summary)
    assert [row[0] for row in rows] == ["ols", "iv", "wald"]
    assert all(len(row) == 8 for row in rows)
    assert set(summary.to_dict()["estimators"]) == {"ols", "iv", "wald"}


def test_too_few_replicates():
    with pytest.raises(ConfigError):
        monte_carlo(SMALL, replicates=10)
    with pytest.raises(ConfigError):
        monte_carlo(SMALL, replicates=10, estimators=(), min_replicates=1)


def test_failures_without_first_stage(caplog):
    flat = SMALL.with_overrides(lam=0.0, delta=0.0, sigma_belief=0.0)
    summary = monte_carlo(
        flat, replicates=4, estimators=(Estimator.iv, Estimator.wald), min_replicates=1
    )
    assert summary.failure_share == 1.0
    assert summary["iv"].failures == 4
    assert summary["wald"].failures == 4
    assert summary["iv"].replicates == 0
    assert "had no usable first stage" in caplog.text


@pytest.mark.slow
class TestEstimatorProperties:
    REPLICATES = 1000

    @pytest.fixture(scope="class")
    def baseline(self):
        return monte_carlo(REFERENCE, self.REPLICATES, n_jobs=-1)

    def test_iv_is_unbiased(self, baseline):
        iv = baseline["iv"]
        assert abs(iv.bias) < 3 * iv.mc_se

    def test_ols_bias_matches_the_confounding(self, baseline):
        ols = baseline["ols"]
        assert ols.bias > 5 * ols.mc_se
        assert ols.bias == pytest.approx(baseline.analytic_ols_bias, rel=0.1)

    def test_iv_interval_coverage(self, baseline):
        assert 0.93 <= baseline["iv"].coverage <= 0.97
        assert baseline["ols"].coverage < 0.9

    def test_anchoring_effect(self, baseline):
        assert baseline.expected_anchoring_effect == pytest.approx(12.0)
        assert baseline.mean_anchoring_effect == pytest.approx(
            baseline.expected_anchoring_effect, abs=3 * baseline.anchoring_effect_mc_se
        )

    def test_direct_anchor_effect_biases_iv(self):
        summary = monte_carlo(REFERENCE.with_overrides(theta=1.0), self.REPLICATES, n_jobs=-1)
        iv = summary["iv"]
        assert iv.bias == pytest.approx(1.0 / summary.expected_anchoring_effect, abs=3 * iv.mc_se)

    def test_variance_follows_the_belief_gap(self, baseline):
        wide = REFERENCE.with_overrides(anchors=(30.0, 70.0))
        wide = monte_carlo(wide, self.REPLICATES, n_jobs=-1)
        assert wide.expected_anchoring_effect == pytest.approx(24.0)
        assert variance_ratio(wide, baseline) == pytest.approx(
            design_variance_ratio(12.0, 24.0), abs=0.05
        )
