"""Tests for panel construction, transforms and lag/difference helpers."""

import random

import numpy as np
import pytest

from panelecm.errors import (
    DuplicateCell,
    GapInPeriods,
    MissingCell,
    MissingVariable,
    NonPositiveForLog,
    ParseError,
    SequenceTooShort,
)
from panelecm.panel import (
    Panel,
    Period,
    Transform,
    VariableSpec,
    apply_transform,
    build_panel,
    lag_diff,
    period_range,
    real_income,
)


def _records(entities=("A", "B"), start=Period(2009, 1), n=6, variables=("HP", "FLOW")):
    out = []
    for e_i, entity in enumerate(entities):
        for t, period in enumerate(period_range(start, Period(2099, 4))[:n]):
            for v_i, var in enumerate(variables):
                out.append((entity, str(period), var, 100.0 * e_i + 10.0 * v_i + t + 1))
    return out


class TestPeriod:
    """Tests for quarterly periods."""

    def test_parse_round_trip(self):
        """A quarter string parses and prints back unchanged."""
        assert str(Period.parse("2009Q1")) == "2009Q1"
        assert Period.parse(" 2019q4 ") == Period(2019, 4)

    def test_bad_quarter_rejected(self):
        """Quarter 5 is not a quarter."""
        with pytest.raises(ParseError):
            Period.parse("2009Q5")
        with pytest.raises(ParseError):
            Period(2009, 0)

    def test_next_wraps_year(self):
        """Q4 is followed by Q1 of the next year."""
        assert Period(2009, 4).next() == Period(2010, 1)

    def test_range_covers_sample(self):
        """2009Q1 through 2019Q1 spans 41 quarters."""
        periods = period_range(Period(2009, 1), Period(2019, 1))
        assert len(periods) == 41
        assert periods[-1] == Period(2019, 1)


class TestBuildPanel:
    """Tests for assembling a balanced panel from records."""

    def test_shape_and_order(self):
        """Entities sort lexicographically and periods chronologically."""
        panel = build_panel(_records(entities=("Thailand", "Indonesia")))
        assert panel.entities == ("Indonesia", "Thailand")
        assert panel.periods[0] == Period(2009, 1)
        assert panel.values.shape == (2, 6, 2)

    def test_record_order_irrelevant(self):
        """Shuffling the input records yields an identical panel."""
        records = _records()
        shuffled = list(records)
        random.Random(7).shuffle(shuffled)
        assert build_panel(records) == build_panel(shuffled)

    def test_missing_cell(self):
        """A dropped record is reported with its coordinates."""
        records = [r for r in _records() if not (r[0] == "B" and r[1] == "2009Q3" and r[2] == "HP")]
        with pytest.raises(MissingCell) as excinfo:
            build_panel(records)
        assert excinfo.value.entity == "B"
        assert excinfo.value.period == "2009Q3"
        assert excinfo.value.variable == "HP"

    def test_duplicate_cell(self):
        """The same cell given twice is rejected."""
        records = _records()
        records.append(records[0])
        with pytest.raises(DuplicateCell):
            build_panel(records)

    def test_gap_in_periods(self):
        """A missing quarter across every entity is a gap, not a missing cell."""
        records = [r for r in _records() if r[1] != "2009Q3"]
        with pytest.raises(GapInPeriods):
            build_panel(records)

    def test_values_read_only(self):
        """Panel values cannot be mutated in place."""
        panel = build_panel(_records())
        with pytest.raises(ValueError):
            panel.values[0, 0, 0] = 1.0

    def test_nan_rejected(self):
        """Non-finite cells are missing cells."""
        values = np.ones((1, 2, 1))
        values[0, 1, 0] = np.nan
        with pytest.raises(MissingCell):
            Panel(["A"], [Period(2009, 1), Period(2009, 2)], ["HP"], values)


class TestPanelAccess:
    """Tests for reading and selecting from a panel."""

    def test_series_and_require(self):
        """Series returns entity x period values; unknown names raise."""
        panel = build_panel(_records())
        assert panel.series("HP").shape == (2, 6)
        with pytest.raises(MissingVariable):
            panel.series("NOPE")

    def test_select_entities(self):
        """Selecting one entity keeps its rows only."""
        panel = build_panel(_records())
        sub = panel.select(entities=["B"])
        assert sub.entities == ("B",)
        assert np.array_equal(sub.series("HP")[0], panel.series("HP")[1])

    def test_to_frame(self):
        """Long frame has one row per entity-period."""
        frame = build_panel(_records()).to_frame()
        assert list(frame.columns[:2]) == ["entity", "period"]
        assert len(frame) == 12
        assert frame.loc[0, "period"] == "2009Q1"


class TestTransforms:
    """Tests for variable transforms."""

    def test_log_of_constant_e(self, make_panel):
        """ln(e) is 1."""
        panel = make_panel({"HP": np.full((2, 5), np.e)})
        out = apply_transform(panel, VariableSpec("HP", Transform.LOG))
        assert np.allclose(out.series("HP"), 1.0)

    def test_log_rejects_non_positive(self, make_panel):
        """A zero value cannot be logged."""
        values = np.ones((1, 5))
        values[0, 2] = 0.0
        with pytest.raises(NonPositiveForLog):
            apply_transform(make_panel({"HP": values}), VariableSpec("HP", Transform.LOG))

    def test_level_is_identity(self, make_panel):
        """A level transform returns the same panel."""
        panel = make_panel({"HP": np.arange(10.0).reshape(2, 5)})
        assert apply_transform(panel, VariableSpec("HP")) is panel

    def test_real_income(self, make_panel):
        """GDP equal to CPI gives ln(100)."""
        panel = make_panel({"GDP": np.full((1, 4), 50.0), "CPI": np.full((1, 4), 50.0)})
        out = real_income(panel, "GDP", "CPI")
        assert np.allclose(out.series("INCOME"), np.log(100.0))


    def test_log_exp_round_trip(self, make_panel, rng):
        """Exponentiating the logged series recovers the raw values."""
        raw = rng.uniform(0.01, 500.0, size=(3, 41))
        out = apply_transform(make_panel({"HP": raw}), VariableSpec("HP", Transform.LOG))
        assert np.allclose(np.exp(out.series("HP")), raw, rtol=1e-12, atol=0)


class TestLagDiff:
    """Tests for the lag and difference operators."""

    def test_diff(self):
        """First differences of [1,3,6,10] are [2,3,4]."""
        assert lag_diff([1, 3, 6, 10], "diff").tolist() == [2, 3, 4]

    def test_lag(self):
        """Lag 1 of [1,2,3] aligned to t=2..3 is [1,2]."""
        assert lag_diff([1, 2, 3], "lag").tolist() == [1, 2]

    def test_length_shrinks_by_k(self):
        """Both operators drop exactly k observations."""
        x = np.arange(10.0)
        assert len(lag_diff(x, "lag", 3)) == 7
        assert len(lag_diff(x, "diff", 2)) == 8

    def test_too_short(self):
        """A single observation cannot be differenced."""
        with pytest.raises(SequenceTooShort):
            lag_diff([1.0], "diff")

    def test_works_on_panels(self):
        """Operates along the period axis of a 2-D array."""
        x = np.arange(12.0).reshape(3, 4)
        assert lag_diff(x, "diff").shape == (3, 3)

    def test_diff_cumsum_round_trip(self, rng):
        """Cumulating differences from the first observation rebuilds the series."""
        x = np.cumsum(rng.normal(size=(4, 41)), axis=1)
        rebuilt = x[:, :1] + np.cumsum(lag_diff(x, "diff"), axis=1)
        assert np.max(np.abs(rebuilt - x[:, 1:])) < 1e-12
