"""Balanced panel data model and deterministic series transforms."""

import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .errors import (
    DuplicateCell,
    GapInPeriods,
    InputError,
    MissingCell,
    MissingVariable,
    NonPositiveForLog,
    ParseError,
    SequenceTooShort,
)

logger = logging.getLogger(__name__)

_PERIOD_RE = re.compile(r"^\s*(\d{4})\s*[Qq]\s*([1-4])\s*$")


@dataclass(frozen=True, order=True)
class Period:
    """A calendar quarter, ordered chronologically."""

    year: int
    quarter: int

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise ParseError(f"Quarter must be in 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Period":
        """Parse the "YYYYQ#" form, e.g. "2009Q1"."""
        match = _PERIOD_RE.match(str(text))
        if match is None:
            raise ParseError(f"Invalid quarterly period {text!r}; expected YYYYQ# with # in 1..4")
        return cls(int(match.group(1)), int(match.group(2)))

    @property
    def ordinal(self) -> int:
        return self.year * 4 + (self.quarter - 1)

    def next(self) -> "Period":
        if self.quarter == 4:
            return Period(self.year + 1, 1)
        return Period(self.year, self.quarter + 1)

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


def period_range(start: Period, end: Period) -> list[Period]:
    """All quarters from start to end inclusive."""
    if end < start:
        return []
    periods = [start]
    while periods[-1] < end:
        periods.append(periods[-1].next())
    return periods


class Transform(str, Enum):
    LEVEL = "level"
    LOG = "natural-log"


class Role(str, Enum):
    DEPENDENT = "dependent"
    REGRESSOR = "regressor"
    AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    transform: Transform = Transform.LEVEL
    role: Role = Role.AUXILIARY


class Panel:
    """Immutable balanced entity x period x variable cube.

    Values are held in a read-only float array of shape
    (n_entities, n_periods, n_variables).
    """

    def __init__(
        self,
        entities: Sequence[str],
        periods: Sequence[Period],
        variables: Sequence[str],
        values: np.ndarray,
    ):
        values = np.array(values, dtype=float)
        shape = (len(entities), len(periods), len(variables))
        if values.shape != shape:
            raise InputError(f"Panel values have shape {values.shape}, expected {shape}")
        if len(set(entities)) != len(entities):
            raise InputError("Entity identifiers must be unique")
        if len(set(variables)) != len(variables):
            raise InputError("Variable names must be unique")
        _check_consecutive(periods)
        if not np.all(np.isfinite(values)):
            i, t, k = (int(v[0]) for v in np.nonzero(~np.isfinite(values)))
            raise MissingCell(entities[i], str(periods[t]), variables[k])
        values.setflags(write=False)
        self._entities = tuple(entities)
        self._periods = tuple(periods)
        self._variables = tuple(variables)
        self._values = values

    @property
    def entities(self) -> tuple[str, ...]:
        return self._entities

    @property
    def periods(self) -> tuple[Period, ...]:
        return self._periods

    @property
    def variables(self) -> tuple[str, ...]:
        return self._variables

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n_entities(self) -> int:
        return len(self._entities)

    @property
    def n_periods(self) -> int:
        return len(self._periods)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            self._entities == other._entities
            and self._periods == other._periods
            and self._variables == other._variables
            and np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        span = f"{self._periods[0]}-{self._periods[-1]}" if self._periods else "empty"
        return (
            f"Panel(entities={self.n_entities}, periods={self.n_periods} [{span}], "
            f"variables={list(self._variables)})"
        )

    def require(self, *names: str) -> None:
        """Raise MissingVariable unless every name is a panel variable."""
        missing = [n for n in names if n not in self._variables]
        if missing:
            raise MissingVariable(
                f"Panel has no variable(s) {', '.join(missing)}; available: {', '.join(self._variables)}"
            )

    def series(self, variable: str) -> np.ndarray:
        """Return an (n_entities, n_periods) view of one variable."""
        self.require(variable)
        return self._values[:, :, self._variables.index(variable)]

    def matrix(self, variables: Sequence[str]) -> np.ndarray:
        """Return an (n_entities, n_periods, len(variables)) array."""
        self.require(*variables)
        idx = [self._variables.index(v) for v in variables]
        return self._values[:, :, idx]

    def with_variable(self, name: str, values: np.ndarray) -> "Panel":
        """Return a new panel with one variable added or replaced."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_entities, self.n_periods):
            raise InputError(
                f"Variable {name!r} has shape {values.shape}, expected {(self.n_entities, self.n_periods)}"
            )
        cube = np.array(self._values)
        if name in self._variables:
            cube[:, :, self._variables.index(name)] = values
            variables = self._variables
        else:
            cube = np.concatenate([cube, values[:, :, None]], axis=2)
            variables = (*self._variables, name)
        return Panel(self._entities, self._periods, variables, cube)

    def select(
        self, entities: Sequence[str] | None = None, variables: Sequence[str] | None = None
    ) -> "Panel":
        """Return a sub-panel restricted to the given entities and/or variables."""
        entities = list(self._entities) if entities is None else list(entities)
        variables = list(self._variables) if variables is None else list(variables)
        self.require(*variables)
        unknown = [e for e in entities if e not in self._entities]
        if unknown:
            raise InputError(f"Unknown entities: {', '.join(unknown)}")
        e_idx = [self._entities.index(e) for e in entities]
        v_idx = [self._variables.index(v) for v in variables]
        return Panel(entities, self._periods, variables, self._values[np.ix_(e_idx, range(self.n_periods), v_idx)])

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (entity, period), one column per variable."""
        index = pd.MultiIndex.from_product(
            [list(self._entities), [str(p) for p in self._periods]], names=["entity", "period"]
        )
        flat = self._values.reshape(self.n_entities * self.n_periods, len(self._variables))
        return pd.DataFrame(flat, index=index, columns=list(self._variables)).reset_index()


def _check_consecutive(periods: Sequence[Period]) -> None:
    for prev, cur in zip(periods, periods[1:]):
        if cur.ordinal - prev.ordinal != 1:
            raise GapInPeriods(f"Periods are not consecutive quarters: {prev} is followed by {cur}")


def build_panel(records: Iterable[tuple[str, str | Period, str, float]]) -> Panel:
    """Build a balanced panel from (entity, period, variable, value) records.

    Entities are ordered lexicographically and periods chronologically, so
    the result does not depend on record order.

    Raises:
        MissingCell: If any entity lacks any period x variable cell
        DuplicateCell: If a cell is given twice
        GapInPeriods: If the observed quarters are not consecutive
    """
    rows = []
    for entity, period, variable, value in records:
        p = period if isinstance(period, Period) else Period.parse(period)
        rows.append((str(entity), p.ordinal, str(variable), float(value)))
    if not rows:
        raise InputError("Cannot build a panel from zero records")

    frame = pd.DataFrame(rows, columns=["entity", "ordinal", "variable", "value"])
    dupes = frame.duplicated(subset=["entity", "ordinal", "variable"], keep=False)
    if dupes.any():
        first = frame[dupes].sort_values(["entity", "ordinal", "variable"]).iloc[0]
        raise DuplicateCell(first.entity, str(_from_ordinal(first.ordinal)), first.variable)

    entities = sorted(frame["entity"].unique())
    ordinals = sorted(frame["ordinal"].unique())
    variables = sorted(frame["variable"].unique())
    periods = [_from_ordinal(o) for o in ordinals]
    _check_consecutive(periods)

    cube = np.full((len(entities), len(periods), len(variables)), np.nan)
    e_pos = {e: i for i, e in enumerate(entities)}
    t_pos = {o: i for i, o in enumerate(ordinals)}
    v_pos = {v: i for i, v in enumerate(variables)}
    cube[
        frame["entity"].map(e_pos).to_numpy(),
        frame["ordinal"].map(t_pos).to_numpy(),
        frame["variable"].map(v_pos).to_numpy(),
    ] = frame["value"].to_numpy()

    missing = np.argwhere(np.isnan(cube))
    if len(missing):
        i, t, k = missing[0]
        raise MissingCell(entities[i], str(periods[t]), variables[k])

    logger.debug("Built panel: %d entities x %d periods x %d variables", *cube.shape)
    return Panel(entities, periods, variables, cube)


def _from_ordinal(ordinal: int) -> Period:
    return Period(int(ordinal) // 4, int(ordinal) % 4 + 1)


def apply_transform(panel: Panel, spec: VariableSpec) -> Panel:
    """Apply a variable's declared transform in place of its raw values.

    Raises:
        NonPositiveForLog: If a natural-log transform meets a value <= 0
    """
    if Transform(spec.transform) is Transform.LEVEL:
        panel.require(spec.name)
        return panel
    raw = panel.series(spec.name)
    bad = np.argwhere(raw <= 0)
    if len(bad):
        i, t = bad[0]
        raise NonPositiveForLog(
            f"Cannot take the natural log of {spec.name!r}: value {raw[i, t]} "
            f"for entity {panel.entities[i]!r} in {panel.periods[t]}"
        )
    return panel.with_variable(spec.name, np.log(raw))


def real_income(panel: Panel, nominal_gdp: str, cpi: str, name: str = "INCOME") -> Panel:
    """Add ln(nominal GDP / CPI x 100) as a new variable."""
    gdp = panel.series(nominal_gdp)
    price = panel.series(cpi)
    real = gdp / price * 100.0
    if np.any(real <= 0):
        raise NonPositiveForLog(f"Real income from {nominal_gdp!r}/{cpi!r} has non-positive values")
    return panel.with_variable(name, np.log(real))


def lag_diff(series: Sequence[float] | np.ndarray, op: str, k: int = 1) -> np.ndarray:
    """Lag or difference a series, keeping only the aligned tail.

    ``op="lag"`` returns x[t-k] for t = k..T-1; ``op="diff"`` applies the
    first difference k times. Both shorten the sequence by exactly k.
    Works along the last axis, so (n_entities, n_periods) arrays are fine.

    Raises:
        SequenceTooShort: If the series has k or fewer observations
    """
    x = np.asarray(series, dtype=float)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x.shape[-1] <= k:
        raise SequenceTooShort(f"Need more than {k} observations for {op} {k}, got {x.shape[-1]}")
    if op == "lag":
        return x[..., :-k]
    if op == "diff":
        return np.diff(x, n=k, axis=-1)
    raise ValueError(f"Unknown operation {op!r}; expected 'lag' or 'diff'")

