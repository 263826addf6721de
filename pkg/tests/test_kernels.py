"""Tests for least squares, ADF and long-run variance kernels."""

import numpy as np
import pytest

from panelecm.errors import EmptySequence, NegativeBandwidth, RankDeficient, SequenceTooShort, TooFewObservations
from panelecm.kernels import (
    Deterministic,
    adf_design,
    adf_test,
    bartlett_weights,
    long_run_variance,
    ols,
    panel_adf,
)


class TestOls:
    """Tests for the least-squares kernel."""

    def test_exact_fit(self):
        """y = x gives a unit coefficient and zero residuals."""
        x = np.arange(1.0, 11.0)
        fit = ols(x, x)
        assert fit.coefficients[0] == pytest.approx(1.0, abs=1e-12)
        assert fit.rss == pytest.approx(0.0, abs=1e-18)

    def test_matches_normal_equations(self, rng):
        """SVD solution agrees with the normal equations."""
        X = rng.normal(size=(200, 3))
        y = X @ np.array([0.5, -1.0, 2.0]) + rng.normal(size=200)
        fit = ols(y, X, intercept=True)
        Z = np.column_stack([np.ones(200), X])
        beta = np.linalg.solve(Z.T @ Z, Z.T @ y)
        assert np.allclose(fit.coefficients, beta, atol=1e-10)
        assert fit.design_columns == ["const", "x0", "x1", "x2"]
        assert fit.dof == 196

    def test_standard_errors(self, rng):
        """Conventional covariance is s^2 (X'X)^-1."""
        X = rng.normal(size=(50, 2))
        y = X[:, 0] + rng.normal(size=50)
        fit = ols(y, X)
        s2 = fit.rss / 48
        expected = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
        assert np.allclose(fit.standard_errors, expected)
        assert np.allclose(fit.t_stats, fit.coefficients / expected)

    def test_coef_by_name(self, rng):
        """Coefficients can be read by column name."""
        X = rng.normal(size=(30, 2))
        fit = ols(X[:, 0] * 3.0, X, names=["a", "b"])
        assert fit.coef("a") == pytest.approx(3.0)

    def test_rank_deficient(self, rng):
        """Duplicated columns are rejected."""
        x = rng.normal(size=20)
        with pytest.raises(RankDeficient) as excinfo:
            ols(x, np.column_stack([x, 2 * x]), context="test")
        assert excinfo.value.rank == 1
        assert "test" in str(excinfo.value)

    def test_too_few_observations(self):
        """n must exceed k."""
        with pytest.raises(TooFewObservations):
            ols([1.0, 2.0], np.eye(2))


    def test_random_systems(self, rng):
        """On 100 random systems the solution satisfies the normal equations and X'e = 0."""
        for _ in range(100):
            k = int(rng.integers(1, 6))
            X = rng.normal(size=(50, k))
            y = X @ rng.normal(size=k) + rng.normal(size=50)
            fit = ols(y, X)
            beta = np.linalg.solve(X.T @ X, X.T @ y)
            assert np.allclose(fit.coefficients, beta, rtol=0, atol=1e-10)
            assert np.max(np.abs(X.T @ fit.residuals)) < 1e-8

    def test_scale_equivariance(self, rng):
        """Rescaling y and a column rescales the coefficients; t-statistics do not move."""
        X = rng.normal(size=(80, 3))
        y = X @ np.array([1.0, 0.5, -0.25]) + rng.normal(size=80)
        base = ols(y, X, intercept=True)
        scaled_X = X * np.array([10.0, 1.0, 0.01])
        scaled = ols(3.0 * y, scaled_X, intercept=True)
        expected = 3.0 * base.coefficients / np.array([1.0, 10.0, 1.0, 0.01])
        assert np.allclose(scaled.coefficients, expected, rtol=1e-10, atol=0)
        assert np.allclose(scaled.t_stats, base.t_stats, rtol=0, atol=1e-10)


class TestAdf:
    """Tests for augmented Dickey-Fuller regressions."""

    def test_design_columns(self):
        """Design starts with the lagged level and ends with lagged differences."""
        y, X, names = adf_design(np.arange(10.0) ** 2, 2, Deterministic.TREND)
        assert names == ["lag_level", "const", "trend", "lag_diff1", "lag_diff2"]
        assert len(y) == X.shape[0] == 7

    def test_stationary_series_rejects(self, rng):
        """White noise gives a very negative ADF statistic."""
        result = adf_test(rng.normal(size=400), aug_lags=1)
        assert result.statistic < -5
        assert result.rho < 0.5

    def test_random_walk_does_not_reject(self, rng):
        """A random walk is usually above the 5% critical value."""
        stats = [adf_test(np.cumsum(rng.normal(size=200))).statistic for _ in range(50)]
        assert np.mean(np.array(stats) > -2.86) > 0.8

    def test_too_short(self):
        """Lags and deterministics need enough observations."""
        with pytest.raises(SequenceTooShort):
            adf_test(np.arange(5.0), aug_lags=1, deterministic="intercept+trend")

    def test_panel_adf(self, study_panel):
        """Panel ADF reports one statistic per entity and their mean."""
        summary = panel_adf(study_panel, "HP")
        assert set(summary.per_entity) == set(study_panel.entities)
        assert summary.mean_statistic == pytest.approx(np.mean(list(summary.per_entity.values())))


    def test_scale_invariance(self, rng):
        """Multiplying the series by a constant leaves the statistic unchanged."""
        x = np.cumsum(rng.normal(size=120))
        for deterministic in Deterministic:
            base = adf_test(x, aug_lags=2, deterministic=deterministic).statistic
            for c in (1e-3, 7.5, 1e4):
                scaled = adf_test(c * x, aug_lags=2, deterministic=deterministic).statistic
                assert scaled == pytest.approx(base, abs=1e-10)


class TestLongRunVariance:
    """Tests for Bartlett long-run variance estimation."""

    def test_zero_bandwidth(self, rng):
        """Without lags, the long-run variance is the contemporaneous one."""
        u = rng.normal(size=100)
        est = long_run_variance(u, bandwidth=0)
        assert est.omega2 == est.sigma2
        assert est.lambda_ == 0.0

    def test_white_noise(self):
        """White noise has unit long-run variance."""
        u = np.random.default_rng(1).normal(size=10_000)
        assert abs(long_run_variance(u, bandwidth=3).omega2 - 1.0) < 0.1

    def test_ma1(self):
        """MA(1) with theta=0.5 approaches (1+theta)^2 with a wide window."""
        e = np.random.default_rng(2).normal(size=200_001)
        u = e[1:] + 0.5 * e[:-1]
        omega2 = long_run_variance(u, bandwidth=20).omega2
        assert 2.1 <= omega2 <= 2.4

    def test_weights(self):
        """Bartlett weights decline linearly to 1/(m+1)."""
        assert np.allclose(bartlett_weights(3), [0.75, 0.5, 0.25])

    def test_matrix_symmetry(self, rng):
        """Omega is symmetric and Delta equals Sigma + Lambda."""
        w = rng.normal(size=(300, 2))
        w[1:, 1] += 0.5 * w[:-1, 0]
        est = long_run_variance(w, bandwidth=4)
        assert np.allclose(est.Omega, est.Omega.T)
        assert np.allclose(est.Omega, est.Sigma + est.Lambda + est.Lambda.T)
        assert np.allclose(est.Delta, est.Sigma + est.Lambda)

    def test_positive_semidefinite(self, rng):
        """Bartlett-weighted Omega is never negative."""
        for _ in range(20):
            est = long_run_variance(rng.normal(size=(50, 3)), bandwidth=5)
            assert np.linalg.eigvalsh(est.Omega).min() >= -1e-12

    def test_errors(self):
        """Empty input and negative bandwidths are rejected."""
        with pytest.raises(EmptySequence):
            long_run_variance([])
        with pytest.raises(NegativeBandwidth):
            long_run_variance([1.0, 2.0], bandwidth=-1)
