"""Cross-checks against statsmodels and linearmodels (dev extras)."""

import numpy as np
import pytest

from abcdkit.estimate.iv import two_sls_arrays
from abcdkit.estimate.linreg import DesignMatrix, f_test_nested, ols_fit

sm = pytest.importorskip("statsmodels.api")


@pytest.fixture
def sample():
    rng = np.random.default_rng(21)
    n = 300
    z = rng.integers(0, 2, size=n).astype(float)
    w = rng.normal(size=n)
    u = rng.normal(size=n)
    x = 40 + 20 * z + 3 * w + 5 * u + rng.normal(size=n)
    y = 1 + 0.5 * x - w + 2 * u + rng.normal(scale=1 + z, size=n)
    return {"z": z, "w": w, "x": x, "y": y}


@pytest.mark.parametrize("cov_type, sm_cov", (("classical", "nonrobust"), ("hc1", "HC1")))
def test_ols_matches_statsmodels(sample, cov_type, sm_cov):
    X = DesignMatrix.from_columns({"x": sample["x"], "w": sample["w"]})
    fit = ols_fit(X, sample["y"], cov_type=cov_type)
    ref = sm.OLS(sample["y"], X.values).fit(cov_type=sm_cov)

    np.testing.assert_allclose(fit.params, ref.params, rtol=1e-10)
    np.testing.assert_allclose([fit.std_errors[n] for n in fit.names], ref.bse, rtol=1e-8)
    assert fit.r2 == pytest.approx(ref.rsquared, rel=1e-10)
    assert fit.adj_r2 == pytest.approx(ref.rsquared_adj, rel=1e-10)
    assert fit.df_resid == ref.df_resid


def test_nested_f_matches_statsmodels(sample):
    full_X = DesignMatrix.from_columns({"z": sample["z"], "w": sample["w"]})
    full = ols_fit(full_X, sample["x"])
    restricted = ols_fit(full_X.without("z"), sample["x"])
    f, p = f_test_nested(full, restricted)

    ref_full = sm.OLS(sample["x"], full_X.values).fit()
    ref_restricted = sm.OLS(sample["x"], full_X.without("z").values).fit()
    ref_f, ref_p, _ = ref_full.compare_f_test(ref_restricted)
    assert f == pytest.approx(ref_f, rel=1e-9)
    assert p == pytest.approx(ref_p, rel=1e-6, abs=1e-300)


@pytest.mark.parametrize("cov_type, lm_cov", (("classical", "unadjusted"), ("hc1", "robust")))
def test_two_sls_matches_linearmodels(sample, cov_type, lm_cov):
    iv_mod = pytest.importorskip("linearmodels.iv")
    fit = two_sls_arrays(
        sample["y"], sample["x"], {"z": sample["z"]}, {"w": sample["w"]}, "x", cov_type
    )
    exog = sm.add_constant(sample["w"][:, None], prepend=True)
    ref = iv_mod.IV2SLS(sample["y"], exog, sample["x"], sample["z"]).fit(
        cov_type=lm_cov, debiased=True
    )
    # linearmodels orders exogenous regressors before the endogenous one
    ref_beta = dict(zip(("const", "w", "x"), np.asarray(ref.params)))
    ref_se = dict(zip(("const", "w", "x"), np.asarray(ref.std_errors)))
    for name in ("const", "w", "x"):
        assert fit.second_stage_coefficients[name] == pytest.approx(ref_beta[name], rel=1e-9)
        assert fit.second_stage_se[name] == pytest.approx(ref_se[name], rel=1e-7)
