"""Tests for Pooled Mean Group estimation."""

import numpy as np
import pytest
from scipy import stats

from panelecm.errors import InvalidParameters, NotConverged, TooFewPeriods
from panelecm.pmg import (
    ArdlOrder,
    ardl_levels,
    diff_name,
    implied_long_run,
    pmg_fit,
    pmg_gradient,
    pmg_loglik,
)
from panelecm.simulate import DgpFamily, DgpSpec, synth_dgp

ORDER = ArdlOrder(p=1, q={"X1": 1})


@pytest.fixture(scope="module")
def ecm_panel():
    params = {"theta": 0.5, "phi": np.linspace(-0.3, -0.7, 10).tolist()}
    return synth_dgp(DgpSpec(DgpFamily.ECM_PMG, N=10, T=60, params=params, seed=8))


@pytest.fixture(scope="module")
def fit(ecm_panel):
    return pmg_fit(ecm_panel, "Y", ["X1"], ORDER)


class TestArdlOrder:
    """Tests for ARDL lag-order handling."""

    def test_default(self):
        """Four flow lags, one for everything else, p=2."""
        order = ArdlOrder.default_for(["FLOW", "INCOME"])
        assert order.p == 2
        assert order.lags("FLOW") == 4
        assert order.lags("INCOME") == 1
        assert order.start(["FLOW", "INCOME"]) == 4
        assert order.n_short_run(["FLOW", "INCOME"]) == 7

    def test_invalid(self):
        """p below 1 and negative q are rejected."""
        with pytest.raises(InvalidParameters):
            ArdlOrder(p=0, q={})
        with pytest.raises(InvalidParameters):
            ArdlOrder(p=1, q={"X": -1})

    def test_diff_names(self):
        """Lagged differences are labelled D(VAR(-j))."""
        assert diff_name("FLOW", 0) == "D(FLOW)"
        assert diff_name("FLOW", 3) == "D(FLOW(-3))"


class TestPmgFit:
    """Tests for the concentrated-likelihood PMG fit."""

    def test_recovers_theta(self, fit):
        """The shared long-run coefficient is close to the true 0.5."""
        assert fit.converged
        assert fit.theta["X1"] == pytest.approx(0.5, abs=0.1)
        assert fit.theta_se["X1"] > 0
        assert fit.flags == []

    def test_loglik_non_decreasing(self, fit):
        """Every accepted iterate improves or keeps the likelihood."""
        history = np.array(fit.loglik_history)
        assert np.all(np.diff(history) >= 0.0)
        assert fit.loglik == history[-1]

    def test_loglik_reproducible(self, fit, ecm_panel):
        """The concentrated likelihood at the estimate matches the reported value."""
        value = pmg_loglik([fit.theta["X1"]], ecm_panel, "Y", ["X1"], ORDER)
        assert value == pytest.approx(fit.loglik, abs=1e-9)

    def test_local_maximum(self, fit, ecm_panel):
        """Moving theta either way lowers the likelihood."""
        theta = fit.theta["X1"]
        for delta in (-0.01, 0.01):
            assert pmg_loglik([theta + delta], ecm_panel, "Y", ["X1"], ORDER) < fit.loglik

    def test_gradient_matches_finite_difference(self, ecm_panel):
        """Analytic gradient agrees with a central difference away from the optimum."""
        theta, h = 0.3, 1e-6
        analytic = pmg_gradient([theta], ecm_panel, "Y", ["X1"], ORDER)[0]
        up = pmg_loglik([theta + h], ecm_panel, "Y", ["X1"], ORDER)
        down = pmg_loglik([theta - h], ecm_panel, "Y", ["X1"], ORDER)
        assert analytic == pytest.approx((up - down) / (2 * h), rel=1e-4)

    def test_gradient_vanishes_at_estimate(self, fit, ecm_panel):
        """The score is numerically zero at the estimate."""
        grad = pmg_gradient([fit.theta["X1"]], ecm_panel, "Y", ["X1"], ORDER)
        assert abs(grad[0]) < 1e-3

    def test_entity_results(self, fit, ecm_panel):
        """Each entity has a negative adjustment speed and named short-run terms."""
        assert [e.entity for e in fit.entities] == sorted(ecm_panel.entities)
        for e in fit.entities:
            assert -2.0 < e.phi < 0.0
            assert list(e.short_run) == ["D(X1)", "C"]
            assert e.n_obs == 59
        assert fit.n_obs_used == 590

    def test_residuals_orthogonal(self, fit):
        """Entity residuals are orthogonal to their own ECM design."""
        for e in fit.entities:
            scale = np.abs(e.design).max() * np.abs(e.residuals).max() * len(e.residuals)
            assert np.all(np.abs(e.design.T @ e.residuals) <= 1e-10 * scale)

    def test_mean_group_averages(self, fit):
        """Mean-group row averages the entity coefficients."""
        assert fit.mean_group.phi == pytest.approx(np.mean([e.phi for e in fit.entities]))
        assert fit.mean_group.short_run["D(X1)"] == pytest.approx(
            np.mean([e.short_run["D(X1)"] for e in fit.entities])
        )

    def test_implied_long_run(self, fit):
        """The ARDL levels form reproduces theta for every entity."""
        for e in fit.entities:
            assert implied_long_run(fit, e.entity)["X1"] == pytest.approx(fit.theta["X1"], rel=1e-10)

    def test_ardl_levels_shapes(self, study_panel):
        """Default orders expand to p autoregressive terms and q+1 distributed lags."""
        fit = pmg_fit(study_panel, "HP", ["FLOW", "INCOME"])
        levels = ardl_levels(fit, "Thailand")
        assert len(levels.ar) == 2
        assert len(levels.distributed_lags["FLOW"]) == 5
        assert len(levels.distributed_lags["INCOME"]) == 2
        assert list(fit.entity("Thailand").short_run) == [
            "D(HP(-1))",
            "D(FLOW)",
            "D(FLOW(-1))",
            "D(FLOW(-2))",
            "D(FLOW(-3))",
            "D(INCOME)",
            "C",
        ]
        assert fit.n_obs_used == 6 * 37

    def test_too_few_periods(self, ecm_panel):
        """Lag orders that eat the sample are rejected."""
        with pytest.raises(TooFewPeriods):
            pmg_fit(ecm_panel, "Y", ["X1"], ArdlOrder(p=2, q={"X1": 50}))

    def test_require_convergence(self, ecm_panel):
        """A single iteration from a distant start does not converge."""
        fit = pmg_fit(ecm_panel, "Y", ["X1"], ORDER, theta0=[5.0], max_iter=1)
        assert not fit.converged
        assert "not-converged" in fit.flags
        with pytest.raises(NotConverged):
            pmg_fit(ecm_panel, "Y", ["X1"], ORDER, theta0=[5.0], max_iter=1, require_convergence=True)

    def test_entity_order_invariant(self, fit, ecm_panel):
        """Reordering entities gives the same estimate."""
        shuffled = ecm_panel.select(entities=list(reversed(ecm_panel.entities)))
        again = pmg_fit(shuffled, "Y", ["X1"], ORDER)
        assert again.theta["X1"] == fit.theta["X1"]

    def test_p_values_stored(self, fit):
        """Long-run, entity and mean-group p-values are two-sided normal and stored on the fit."""
        assert fit.p_values["X1"] == pytest.approx(2 * stats.norm.sf(abs(fit.z_stats["X1"])))
        for e in fit.entities:
            assert e.phi_p == pytest.approx(2 * stats.norm.sf(abs(e.phi_z)))
            assert e.short_run_p["D(X1)"] == pytest.approx(2 * stats.norm.sf(abs(e.short_run_z["D(X1)"])))
        mg = fit.mean_group
        assert mg.phi_z == pytest.approx(mg.phi / mg.phi_se)
        assert mg.phi_p == pytest.approx(2 * stats.norm.sf(abs(mg.phi_z)))


class TestPmgLikelihood:
    """Checks of the likelihood surface against direct evaluation."""

    def test_single_entity_grid_argmax(self):
        """With one entity the fitted theta is the argmax of the likelihood over a fine grid."""
        panel = synth_dgp(DgpSpec(DgpFamily.ECM_PMG, N=1, T=200, params={"theta": 0.5}, seed=11))
        fit = pmg_fit(panel, "Y", ["X1"], ORDER)
        step = 1e-3
        grid = fit.theta["X1"] + np.arange(-1000, 1001) * step
        values = [pmg_loglik([t], panel, "Y", ["X1"], ORDER) for t in grid]
        best = grid[int(np.argmax(values))]
        assert best == pytest.approx(fit.theta["X1"], abs=step)
        assert fit.loglik >= max(values) - 1e-9

    def test_ascent_from_random_starts(self):
        """Across 50 random fits the likelihood never falls between iterates."""
        rng = np.random.default_rng(12)
        for seed in range(50):
            panel = synth_dgp(DgpSpec(DgpFamily.ECM_PMG, N=4, T=60, params={"theta": 0.5}, seed=seed))
            theta0 = float(rng.uniform(-2.0, 3.0))
            fit = pmg_fit(panel, "Y", ["X1"], ORDER, theta0=[theta0])
            history = np.array(fit.loglik_history)
            assert np.all(np.diff(history) >= 0.0), seed
            assert history[0] == pytest.approx(pmg_loglik([theta0], panel, "Y", ["X1"], ORDER), abs=1e-9)
            assert fit.loglik >= history[0]

    def test_gradient_at_random_points(self, ecm_panel, fit):
        """The analytic score matches central differences at ten points off the optimum."""
        rng = np.random.default_rng(13)
        h = 1e-6
        centre = fit.theta["X1"]
        offsets = np.concatenate([rng.uniform(0.2, 1.0, 5), -rng.uniform(0.2, 1.0, 5)])
        for theta in centre + offsets:
            analytic = pmg_gradient([theta], ecm_panel, "Y", ["X1"], ORDER)[0]
            up = pmg_loglik([theta + h], ecm_panel, "Y", ["X1"], ORDER)
            down = pmg_loglik([theta - h], ecm_panel, "Y", ["X1"], ORDER)
            numeric = (up - down) / (2 * h)
            assert abs(analytic - numeric) < 1e-4 * abs(numeric), theta


@pytest.mark.slow
class TestThetaRecoveryStudy:
    """Sampling behaviour of the shared long-run coefficient."""

    def test_theta_within_tolerance(self):
        """At least 90% of 200 panels (N=6, T=200) put theta within 0.1 of 0.5."""
        hits = 0
        for seed in range(200):
            panel = synth_dgp(DgpSpec(DgpFamily.ECM_PMG, N=6, T=200, params={"theta": 0.5}, seed=seed))
            fit = pmg_fit(panel, "Y", ["X1"], ORDER)
            hits += abs(fit.theta["X1"] - 0.5) <= 0.1
        assert hits >= 180
