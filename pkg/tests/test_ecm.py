"""Tests for the fixed-effect error-correction regression."""

import numpy as np
import pandas as pd
import pytest

from panelecm.ecm import build_ecm_design, fe_estimate, interaction_name, within_transform
from panelecm.errors import RankDeficient, SequenceTooShort
from panelecm.panel import Panel, Period, period_range
from panelecm.simulate import study_fixture

EXPECTED_COLUMNS = [
    "L.HP",
    "L.FLOW",
    "L.INST_FLOW",
    "L.INTEREST",
    "LD.HP",
    "LD.FLOW",
    "LD.INST_FLOW",
    "LD.INTEREST",
]


@pytest.fixture(scope="module")
def design():
    return build_ecm_design(study_fixture(seed=0))


def _lsdv(design, time_fe):
    """Least squares with explicit entity (and period) dummies."""
    parts = [design.X, pd.get_dummies(design.entity_index).to_numpy(dtype=float)]
    if time_fe:
        parts.append(pd.get_dummies(design.period_index, drop_first=True).to_numpy(dtype=float))
    Z = np.column_stack(parts)
    beta, *_ = np.linalg.lstsq(Z, design.y, rcond=None)
    return beta[: design.X.shape[1]]


class TestDesign:
    """Tests for building the error-correction design."""

    def test_shape(self, design):
        """Six entities x 41 quarters loses two quarters each: 234 rows."""
        assert design.n_obs == 234
        assert design.n_periods_used == 39
        assert design.columns == EXPECTED_COLUMNS
        assert design.dependent == "D.HP"
        assert design.rows[0] == ("Indonesia", Period(2009, 3))
        assert design.flags == []

    def test_interaction_values(self, design, study_panel):
        """L.INST_FLOW is the product of lagged INST and lagged FLOW."""
        inst = study_panel.series("INST")[0]
        flow = study_panel.series("FLOW")[0]
        assert np.allclose(design.column("L.INST_FLOW")[:39], inst[1:-1] * flow[1:-1])
        assert interaction_name("INST", "FLOW") == "INST_FLOW"

    def test_dependent_is_difference(self, design, study_panel):
        """D.HP at t is HP_t - HP_{t-1} from the third quarter on."""
        hp = study_panel.series("HP")[0]
        assert np.allclose(design.y[:39], np.diff(hp)[1:])
        assert np.allclose(design.column("LD.HP")[:39], np.diff(hp)[:-1])

    def test_extra_regressors(self, study_panel):
        """Robustness regressors extend both blocks."""
        design = build_ecm_design(study_panel, extra_regressors=["EXRATE"])
        assert design.columns[4] == "L.EXRATE"
        assert design.columns[-1] == "LD.EXRATE"

    def test_zero_inst_flagged(self, study_panel):
        """An all-zero institution score makes both interaction columns degenerate."""
        panel = study_panel.with_variable("INST", np.zeros((6, 41)))
        design = build_ecm_design(panel)
        assert "degenerate:L.INST_FLOW" in design.flags
        assert "degenerate:LD.INST_FLOW" in design.flags
        with pytest.raises(RankDeficient):
            fe_estimate(design)

    def test_constant_flow(self, study_panel):
        """A flow series constant in time has zero lagged differences."""
        flow = np.repeat(np.arange(1.0, 7.0)[:, None], 41, axis=1)
        design = build_ecm_design(study_panel.with_variable("FLOW", flow))
        assert np.all(design.column("LD.FLOW") == 0.0)
        assert "degenerate:LD.FLOW" in design.flags

    def test_too_short(self, make_panel):
        """At least four periods are needed."""
        ones = np.ones((2, 3))
        panel = make_panel({"HP": ones, "FLOW": ones, "INST": ones, "INTEREST": ones})
        with pytest.raises(SequenceTooShort):
            build_ecm_design(panel)


class TestWithinTransform:
    """Tests for the fixed-effect within transformation."""

    def test_entity_means_removed(self, rng):
        """Entity-demeaned data has zero mean in every entity."""
        groups = np.repeat(np.arange(4), 10)
        out = within_transform(rng.normal(size=40) + groups, groups)
        assert np.allclose(np.bincount(groups, weights=out), 0.0)

    def test_two_way(self, rng):
        """Two-way demeaning zeroes entity and period means on balanced data."""
        groups = np.repeat(np.arange(4), 10)
        periods = np.tile(np.arange(10), 4)
        out = within_transform(rng.normal(size=(40, 2)), groups, periods)
        for j in range(2):
            assert np.allclose(np.bincount(groups, weights=out[:, j]), 0.0)
            assert np.allclose(np.bincount(periods, weights=out[:, j]), 0.0)


class TestFeEstimate:
    """Tests for the fixed-effect ECM estimate."""

    def test_within_oracle(self, design):
        """Entity FE equals OLS on independently demeaned data."""
        frame = pd.DataFrame(design.X, columns=design.columns)
        frame["y"] = design.y
        frame["g"] = design.entity_index
        demeaned = frame.groupby("g").transform(lambda s: s - s.mean())
        beta, *_ = np.linalg.lstsq(demeaned[design.columns].to_numpy(), demeaned["y"].to_numpy(), rcond=None)
        report = fe_estimate(design)
        assert np.allclose([report.coefficients[c] for c in design.columns], beta, rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("time_fe", [False, True])
    def test_lsdv_oracle(self, design, time_fe):
        """Within estimates equal the dummy-variable regression."""
        report = fe_estimate(design, time_fe=time_fe)
        expected = _lsdv(design, time_fe)
        assert np.allclose([report.coefficients[c] for c in design.columns], expected, rtol=1e-7, atol=1e-9)

    def test_random_designs_match_lsdv(self, rng):
        """Two-way within equals LSDV on random balanced designs."""
        for _ in range(20):
            N, T = 5, 12
            design = build_ecm_design(_random_panel(rng, N, T))
            report = fe_estimate(design, time_fe=True)
            expected = _lsdv(design, True)
            assert np.allclose([report.coefficients[c] for c in design.columns], expected, rtol=1e-7, atol=1e-9)

    def test_recovers_signs(self, design):
        """Positive lagged flow effect and negative interaction."""
        for time_fe in (False, True):
            report = fe_estimate(design, time_fe=time_fe)
            assert report.coefficients["L.FLOW"] > 0
            assert report.coefficients["L.INST_FLOW"] < 0
            assert report.coefficients["L.HP"] < 0

    def test_degrees_of_freedom(self, design):
        """Absorbed effects reduce the residual degrees of freedom."""
        assert fe_estimate(design).dof == 234 - 8 - 6
        assert fe_estimate(design, time_fe=True).dof == 234 - 8 - 6 - 38

    def test_shift_invariance(self, study_panel, design):
        """Adding a constant to levels outside the interaction leaves slopes unchanged."""
        shifted = study_panel
        for name in ("HP", "INTEREST"):
            shifted = shifted.with_variable(name, shifted.series(name) + 10.0)
        base = fe_estimate(design).coefficients
        moved = fe_estimate(build_ecm_design(shifted)).coefficients
        for name in EXPECTED_COLUMNS:
            assert moved[name] == pytest.approx(base[name], rel=1e-6, abs=1e-9)

    def test_drop_entity(self, study_panel):
        """Dropping one entity removes exactly 39 rows."""
        fewer = study_panel.select(entities=[e for e in study_panel.entities if e != "Vietnam"])
        assert fe_estimate(build_ecm_design(fewer)).n_obs == 234 - 39

    def test_clustered(self, design):
        """Clustering changes standard errors, not coefficients."""
        conventional = fe_estimate(design)
        clustered = fe_estimate(design, cluster=True)
        assert clustered.se_type == "cluster-entity"
        assert conventional.se_type == "conventional"
        assert clustered.coefficients == conventional.coefficients
        assert clustered.standard_errors != conventional.standard_errors
        assert all(se > 0 for se in clustered.standard_errors.values())

    def test_report_fields(self, design):
        """p-values are two-sided normal and R-squared is in [0, 1]."""
        report = fe_estimate(design, time_fe=True)
        assert report.time_fe and report.entity_fe
        assert report.n_entities == 6
        assert 0.0 <= report.r2_within <= 1.0
        for name in design.columns:
            assert 0.0 <= report.p_values[name] <= 1.0


@pytest.mark.slow
class TestSignRecoveryStudy:
    """Sign recovery of the interaction coefficient over many panels."""

    def test_two_hundred_seeds(self):
        """Signs are recovered in at least 95% of 200 simulated panels."""
        hits = 0
        for seed in range(200):
            report = fe_estimate(build_ecm_design(study_fixture(seed=seed)), time_fe=True)
            hits += report.coefficients["L.FLOW"] > 0 and report.coefficients["L.INST_FLOW"] < 0
        assert hits >= 190


def _random_panel(rng, N, T):
    periods = period_range(Period(2009, 1), Period(2099, 4))[:T]
    cube = rng.normal(size=(N, T, 4)) + np.arange(N)[:, None, None]
    return Panel([f"E{i}" for i in range(N)], periods, ["HP", "FLOW", "INST", "INTEREST"], cube)
