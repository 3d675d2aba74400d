import numpy as np
import pytest
from scipy import stats

from abcdkit.errors import DomainError, InsufficientDataError, NestingError, SingularDesignError
from abcdkit.estimate.linreg import (
    INTERCEPT,
    DesignMatrix,
    f_test_nested,
    ols_fit,
    stars,
    t_cdf,
    t_two_sided_p,
)


@pytest.fixture
def noisy():
    rng = np.random.default_rng(11)
    x1 = rng.normal(size=60)
    x2 = rng.uniform(-3, 3, size=60)
    y = 1.5 - 2.0 * x1 + 0.25 * x2 + rng.normal(scale=0.7, size=60)
    return DesignMatrix.from_columns({"x1": x1, "x2": x2}), y


@pytest.mark.parametrize(
    "t, df",
    [
        (t, df)
        for t in (-4.0, -2.5, -1.0, 0.3, 1.0, 2.0, 2.776, 6.0, 10.0, 40.0)
        for df in (1, 9)
    ],
)
def test_t_cdf_matches_reference(t, df):
    assert t_cdf(t, df) == pytest.approx(stats.t.cdf(t, df), abs=1e-8)


def test_t_cdf_spot_values():
    assert t_cdf(0.0, 5) == 0.5
    assert t_cdf(2.228, 10) == pytest.approx(0.975, abs=1e-4)
    assert t_cdf(1.96, 10**6) == pytest.approx(stats.norm.cdf(1.96), abs=1e-4)
    assert t_cdf(np.inf, 3) == 1.0
    assert t_cdf(-np.inf, 3) == 0.0


def test_t_cdf_symmetry():
    for t in (0.5, 1.7, 3.2):
        assert t_cdf(t, 7) + t_cdf(-t, 7) == pytest.approx(1.0, abs=1e-14)


def test_t_cdf_rejects_small_df():
    with pytest.raises(DomainError):
        t_cdf(1.0, 0.5)


def test_two_sided_p_keeps_tiny_values():
    p = t_two_sided_p(40.0, 100)
    assert 0 < p < 1e-60
    assert t_two_sided_p(0.0, 10) == 1.0


def test_exact_fit():
    x = np.arange(10.0)
    fit = ols_fit(DesignMatrix.from_columns({"x": x}), 3.0 + 2.0 * x)
    assert fit.coefficients[INTERCEPT] == pytest.approx(3.0, abs=1e-12)
    assert fit.coefficients["x"] == pytest.approx(2.0, abs=1e-12)
    assert fit.rss == pytest.approx(0.0, abs=1e-20)
    assert fit.r2 == 1.0


def test_matches_lstsq(noisy):
    X, y = noisy
    fit = ols_fit(X, y)
    expected, *_ = np.linalg.lstsq(X.values, y, rcond=None)
    np.testing.assert_allclose(fit.params, expected, atol=1e-10)
    assert fit.names == (INTERCEPT, "x1", "x2")
    assert fit.df_resid == 57


def test_residuals_orthogonal_to_design(noisy):
    X, y = noisy
    fit = ols_fit(X, y)
    assert np.max(np.abs(X.values.T @ fit.residuals)) < 1e-8 * np.linalg.norm(y)


def test_classical_standard_errors(noisy):
    X, y = noisy
    fit = ols_fit(X, y)
    sigma2 = fit.rss / fit.df_resid
    expected = np.sqrt(np.diag(sigma2 * np.linalg.inv(X.values.T @ X.values)))
    np.testing.assert_allclose([fit.std_errors[n] for n in fit.names], expected, rtol=1e-9)
    lo, hi = fit.conf_int("x1")
    assert lo < fit.coefficients["x1"] < hi


def test_hc1_standard_errors(noisy):
    X, y = noisy
    robust = ols_fit(X, y, cov_type="hc1")
    bread = np.linalg.inv(X.values.T @ X.values)
    meat = (X.values.T * robust.residuals**2) @ X.values
    expected = np.sqrt(np.diag(bread @ meat @ bread * X.n / (X.n - X.k)))
    np.testing.assert_allclose([robust.std_errors[n] for n in robust.names], expected, rtol=1e-9)
    np.testing.assert_allclose(robust.params, ols_fit(X, y).params)


def test_unknown_cov_type(noisy):
    X, y = noisy
    with pytest.raises(DomainError):
        ols_fit(X, y, cov_type="hc3")


def test_rank_deficient_design_names_the_column():
    x = np.arange(8.0)
    X = DesignMatrix.from_columns({"x": x, "twice": 2 * x})
    with pytest.raises(SingularDesignError) as e:
        ols_fit(X, x + 1)
    assert e.value.column in ("x", "twice")


def test_too_few_observations():
    X = DesignMatrix.from_columns({"x": [1.0, 2.0]})
    with pytest.raises(InsufficientDataError):
        ols_fit(X, [1.0, 3.0])


def test_non_finite_values():
    with pytest.raises(DomainError):
        DesignMatrix.from_columns({"x": [1.0, np.nan, 3.0]})
    X = DesignMatrix.from_columns({"x": [1.0, 2.0, 3.0, 4.0]})
    with pytest.raises(DomainError):
        ols_fit(X, [1.0, np.inf, 2.0, 3.0])


def test_f_equals_t_squared_for_one_restriction(noisy):
    X, y = noisy
    full = ols_fit(X, y)
    restricted = ols_fit(X.without("x2"), y)
    f, p = f_test_nested(full, restricted)
    assert f == pytest.approx(full.t_values["x2"] ** 2, rel=1e-10)
    assert p == pytest.approx(full.p_values["x2"], rel=1e-8)


def test_joint_f_test(noisy):
    X, y = noisy
    full = ols_fit(X, y)
    restricted = ols_fit(X.without("x1", "x2"), y)
    f, p = f_test_nested(full, restricted)
    expected = ((restricted.rss - full.rss) / 2) / (full.rss / full.df_resid)
    assert f == pytest.approx(expected)
    assert p == pytest.approx(stats.f.sf(expected, 2, full.df_resid))


def test_f_test_requires_nesting(noisy):
    X, y = noisy
    full = ols_fit(X.without("x2"), y)
    other = ols_fit(X.without("x1"), y)
    with pytest.raises(NestingError):
        f_test_nested(full, other, q=1)


def test_f_test_requires_same_sample(noisy):
    X, y = noisy
    shorter = ols_fit(DesignMatrix.from_columns({"x1": X.column("x1")[:-1]}), y[:-1])
    with pytest.raises(NestingError):
        f_test_nested(shorter, ols_fit(X.without("x1", "x2"), y))


@pytest.mark.parametrize(
    "p, marks",
    ((0.0004, "***"), (0.004, "**"), (0.04, "*"), (0.2, ""), (float("nan"), "")),
)
def test_stars(p, marks):
    assert stars(p) == marks


def test_constant_outcome():
    x = np.array([1.0, 4.0, 2.0, 8.0, 5.0, 7.0])
    fit = ols_fit(DesignMatrix.from_columns({"x": x}), np.full(6, 5.0))
    assert fit.coefficients[INTERCEPT] == pytest.approx(5.0, abs=1e-12)
    assert fit.coefficients["x"] == 0.0
    assert fit.t_values["x"] == 0.0
    assert fit.p_values["x"] == 1.0
    assert fit.rss == 0.0
    assert fit.r2 == 0.0


def test_slope_has_closed_form(noisy):
    X, y = noisy
    x = X.column("x1")
    fit = ols_fit(X.without("x2"), y)
    slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    assert fit.coefficients["x1"] == pytest.approx(slope, rel=1e-10)
    assert fit.coefficients[INTERCEPT] == pytest.approx(y.mean() - slope * x.mean(), rel=1e-10)


@pytest.mark.parametrize("shift, factor", ((10.0, 1.0), (0.0, 0.01), (-250.0, 40.0)))
def test_shift_and_rescale_invariance(noisy, shift, factor):
    X, y = noisy
    x1 = X.column("x1")
    fit = ols_fit(X, y)
    columns = {"x1": shift + factor * x1, "x2": X.column("x2")}
    moved = ols_fit(DesignMatrix.from_columns(columns), y)
    assert moved.coefficients["x1"] == pytest.approx(fit.coefficients["x1"] / factor, rel=1e-9)
    assert moved.t_values["x1"] == pytest.approx(fit.t_values["x1"], rel=1e-9)
    assert moved.p_values["x1"] == pytest.approx(fit.p_values["x1"], rel=1e-6)
    assert moved.r2 == pytest.approx(fit.r2, rel=1e-12)
    assert moved.coefficients["x2"] == pytest.approx(fit.coefficients["x2"], rel=1e-9)


def test_intercept_only_design_needs_a_row_count():
    X = DesignMatrix.from_columns({}, n=4)
    assert X.names == (INTERCEPT,)
    assert X.n == 4
    fit = ols_fit(X, [1.0, 2.0, 3.0, 6.0])
    assert fit.coefficients[INTERCEPT] == pytest.approx(3.0)
    with pytest.raises(DomainError):
        DesignMatrix.from_columns({})
    with pytest.raises(DomainError):
        DesignMatrix.from_columns({"x": [1.0, 2.0]}, n=3)
