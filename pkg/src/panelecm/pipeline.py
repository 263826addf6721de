"""Data ingestion, configuration and the end-to-end estimation pipeline."""

import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import pandas as pd

from . import report
from .causality import dh_test
from .coint import CointSpec, MomentSource, PedroniVariant, kao_test, pedroni_test
from .ecm import build_ecm_design, fe_estimate
from .errors import ConfigError, InputError, MissingYear, PanelEcmError, ParseError, StageError
from .fmols import FmolsMode, fmols_panel
from .kernels import panel_adf
from .panel import Panel, Period, Role, Transform, VariableSpec, apply_transform, build_panel, real_income
from .pmg import ArdlOrder, pmg_fit
from .simulate import study_fixture

logger = logging.getLogger(__name__)

WORKERS_ENV = "PANELECM_WORKERS"
STAGES = ("kao", "pedroni", "causality", "fmols", "pmg", "ecm")
DEFAULT_REGRESSORS = ("FLOW", "INCOME", "INTEREST", "EXRATE", "STOCKPRICE")


def default_workers() -> int:
    """Worker count for Monte Carlo runs from PANELECM_WORKERS (0 or unset = serial)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 0
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ConfigError(f"{WORKERS_ENV} must be >= 0, got {workers}")
    return workers


@dataclass
class PipelineConfig:
    input: Path | None = None
    annual_input: Path | None = None
    variables: dict[str, VariableSpec] | None = None
    real_income: dict[str, str] | None = None
    stages: list[str] = field(default_factory=lambda: list(STAGES))
    dependent: str = "HP"
    regressors: list[str] = field(default_factory=lambda: list(DEFAULT_REGRESSORS))
    cause: str = "FLOW"
    inst: str = "INST"
    controls: list[str] = field(default_factory=lambda: ["INTEREST"])
    robustness_regressors: list[str] = field(default_factory=lambda: ["EXRATE", "INCOME", "STOCKPRICE"])
    bandwidth: int = 3
    aug_lags: int = 1
    dh_lags: int = 2
    ardl_p: int = 2
    ardl_q: dict[str, int] = field(default_factory=lambda: {"FLOW": 4})
    time_fe: bool | str = "both"
    cluster: bool = False
    pedroni_variant: str = "panel"
    pedroni_trend: bool = True
    pedroni_moments: str = "table"
    kao_finite_sample: bool = True
    output_dir: Path | None = None
    seed: int = 0

    def __post_init__(self):
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"Unknown stage(s) {', '.join(unknown)}; choose from {', '.join(STAGES)}")
        if self.bandwidth < 0:
            raise ConfigError(f"bandwidth must be >= 0, got {self.bandwidth}")
        if self.aug_lags < 0:
            raise ConfigError(f"aug_lags must be >= 0, got {self.aug_lags}")
        if self.dh_lags < 1:
            raise ConfigError(f"dh_lags must be >= 1, got {self.dh_lags}")
        if self.ardl_p < 1:
            raise ConfigError(f"ardl_p must be >= 1, got {self.ardl_p}")
        if self.time_fe not in (True, False, "both"):
            raise ConfigError(f"time_fe must be true, false or \"both\", got {self.time_fe!r}")
        if self.pedroni_variant not in {v.value for v in PedroniVariant}:
            raise ConfigError(f"pedroni_variant must be 'panel' or 'group', got {self.pedroni_variant!r}")
        if self.pedroni_moments not in {s.value for s in MomentSource}:
            raise ConfigError(f"pedroni_moments must be 'table' or 'simulated', got {self.pedroni_moments!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "PipelineConfig":
        """Build a config from a decoded JSON document, rejecting unknown keys.

        Relative paths resolve against base_dir (the config file's directory).
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}")
        values = dict(data)
        for key in ("input", "annual_input", "output_dir"):
            if values.get(key) is not None:
                path = Path(values[key])
                values[key] = path if path.is_absolute() or base_dir is None else base_dir / path
        if values.get("variables") is not None:
            values["variables"] = _parse_variables(values["variables"])
            _apply_roles(values)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(f"Invalid configuration: {exc}") from None

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """Return a copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def fe_variants(self) -> list[bool]:
        return [False, True] if self.time_fe == "both" else [bool(self.time_fe)]

    def ardl_order(self) -> ArdlOrder:
        return ArdlOrder(p=self.ardl_p, q={r: int(self.ardl_q.get(r, 1)) for r in self.regressors})


def _parse_variables(raw: Mapping[str, Any]) -> dict[str, VariableSpec]:
    specs = {}
    for name, entry in raw.items():
        entry = entry or {}
        try:
            specs[name] = VariableSpec(
                name=name,
                transform=Transform(entry.get("transform", Transform.LEVEL.value)),
                role=Role(entry.get("role", Role.AUXILIARY.value)),
            )
        except ValueError as exc:
            raise ConfigError(f"Variable {name!r}: {exc}") from None
    return specs


def _apply_roles(values: dict[str, Any]) -> None:
    """Take dependent and regressors from declared variable roles.

    Explicit dependent/regressors keys may repeat what the roles say but not
    contradict it.
    """
    specs: dict[str, VariableSpec] = values["variables"]
    dependents = [name for name, spec in specs.items() if spec.role is Role.DEPENDENT]
    regressors = [name for name, spec in specs.items() if spec.role is Role.REGRESSOR]
    if len(dependents) > 1:
        raise ConfigError(f"Only one variable may have role 'dependent', got {', '.join(dependents)}")
    if dependents:
        if values.get("dependent", dependents[0]) != dependents[0]:
            raise ConfigError(
                f"dependent {values['dependent']!r} contradicts variable {dependents[0]!r} declared as dependent"
            )
        values["dependent"] = dependents[0]
    if regressors:
        if list(values.get("regressors", regressors)) != regressors:
            raise ConfigError(
                f"regressors {list(values['regressors'])} contradict the variables declared as regressors {regressors}"
            )
        values["regressors"] = regressors


def load_config(path: str | Path) -> PipelineConfig:
    """Read a JSON pipeline configuration.

    Raises:
        ConfigError: If the file is unreadable, not a JSON object, or invalid
    """
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc.strerror}") from None
    except orjson.JSONDecodeError as exc:
        raise ConfigError(f"Config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    return PipelineConfig.from_dict(data, base_dir=path.parent)


# Ingestion


def _read_text_csv(path: str | Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except FileNotFoundError:
        raise InputError(f"Input file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"Cannot parse CSV {path}: {exc}") from None


def _parse_value(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"Invalid number {text!r}", row=row, column=column) from None
    if not np.isfinite(value):
        raise ParseError(f"Non-finite value {text!r}", row=row, column=column)
    return value


def ingest_csv(path: str | Path, mapping: Mapping[str, VariableSpec] | None = None) -> Panel:
    """Read a long-format CSV (entity, period, one column per variable) into a Panel.

    Rows are numbered as file lines (the header is line 1). Only mapped
    columns are kept when a mapping is given, and their transforms applied.

    Raises:
        ParseError: For malformed periods or values, with row/column location
        InputError: For missing columns, duplicates, gaps or missing cells
    """
    frame = _read_text_csv(path)
    header = [c.strip() for c in frame.columns]
    frame.columns = header
    if header[:2] != ["entity", "period"]:
        raise ParseError("Header must start with 'entity,period'", row=1)
    columns = list(mapping) if mapping is not None else header[2:]
    missing = [c for c in columns if c not in header]
    if missing:
        raise InputError(f"CSV {path} lacks mapped column(s): {', '.join(missing)}")
    if not columns:
        raise ParseError("CSV has no variable columns", row=1)

    records = []
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        values = dict(zip(header, row))
        try:
            period = Period.parse(values["period"])
        except ParseError:
            raise ParseError(f"Invalid period {values['period']!r}", row=line, column="period") from None
        entity = values["entity"].strip()
        if not entity:
            raise ParseError("Empty entity identifier", row=line, column="entity")
        for col in columns:
            records.append((entity, period, col, _parse_value(values[col].strip(), line, col)))

    panel = build_panel(records)
    for spec in (mapping or {}).values():
        panel = apply_transform(panel, spec)
    logger.info("Ingested %s: %r", path, panel)
    return panel


def write_csv(panel: Panel, path: str | Path) -> None:
    """Write a panel in the long CSV layout that ingest_csv reads."""
    panel.to_frame().to_csv(path, index=False)


def expand_annual(annual: Iterable[tuple[int, float]], quarters: Sequence[Period]) -> list[float]:
    """Hold each year's value across its four quarters.

    Raises:
        MissingYear: If a year in the quarter range has no value
    """
    by_year = {int(y): float(v) for y, v in annual}
    needed = sorted({q.year for q in quarters})
    missing = [y for y in needed if y not in by_year]
    if missing:
        raise MissingYear(f"No annual value for year(s) {', '.join(map(str, missing))}")
    return [by_year[q.year] for q in quarters]


def load_annual_csv(path: str | Path) -> dict[str, dict[str, list[tuple[int, float]]]]:
    """Read an annual CSV (entity, year, one column per variable) as {variable: {entity: [(year, value)]}}."""
    frame = _read_text_csv(path)
    frame.columns = [c.strip() for c in frame.columns]
    if list(frame.columns[:2]) != ["entity", "year"]:
        raise ParseError("Annual CSV header must start with 'entity,year'", row=1)
    out: dict[str, dict[str, list[tuple[int, float]]]] = {v: {} for v in frame.columns[2:]}
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        values = dict(zip(frame.columns, row))
        try:
            year = int(values["year"])
        except ValueError:
            raise ParseError(f"Invalid year {values['year']!r}", row=line, column="year") from None
        for var in out:
            out[var].setdefault(values["entity"].strip(), []).append(
                (year, _parse_value(values[var].strip(), line, var))
            )
    return out


def attach_annual(panel: Panel, name: str, annual: Mapping[str, Iterable[tuple[int, float]]]) -> Panel:
    """Add an annual variable to a quarterly panel by step-hold expansion."""
    missing = [e for e in panel.entities if e not in annual]
    if missing:
        raise MissingYear(f"Annual variable {name!r} has no data for entities {', '.join(missing)}")
    rows = []
    for entity in panel.entities:
        try:
            rows.append(expand_annual(annual[entity], panel.periods))
        except MissingYear as exc:
            raise MissingYear(f"{name} for {entity}: {exc}") from None
    return panel.with_variable(name, np.array(rows))


# Descriptive statistics


@dataclass
class DescriptiveEntry:
    entity: str
    variable: str
    mean: float
    std: float
    n_obs: int


@dataclass
class DescriptiveTable:
    variables: list[str]
    entries: list[DescriptiveEntry]

    def get(self, entity: str, variable: str) -> DescriptiveEntry:
        for e in self.entries:
            if e.entity == entity and e.variable == variable:
                return e
        raise KeyError((entity, variable))


POOLED = "Pooled"


def describe(panel: Panel, variables: Sequence[str] | None = None) -> DescriptiveTable:
    """Mean, sample standard deviation and observation count per entity and pooled."""
    variables = list(variables) if variables is not None else list(panel.variables)
    panel.require(*variables)
    frame = panel.to_frame()
    grouped = frame.groupby("entity", sort=True)[variables].agg(["mean", "std", "count"])
    entries = []
    for entity in grouped.index:
        for v in variables:
            entries.append(
                DescriptiveEntry(
                    entity=str(entity),
                    variable=v,
                    mean=float(grouped.loc[entity, (v, "mean")]),
                    std=float(grouped.loc[entity, (v, "std")]),
                    n_obs=int(grouped.loc[entity, (v, "count")]),
                )
            )
    for v in variables:
        col = frame[v]
        entries.append(DescriptiveEntry(POOLED, v, float(col.mean()), float(col.std()), int(col.count())))
    return DescriptiveTable(variables=variables, entries=entries)


# Pipeline


def load_panel(config: PipelineConfig) -> Panel:
    """Panel for a run: the configured CSV (plus annual data), or the built-in fixture."""
    if config.input is None:
        logger.info("No input configured; using the built-in synthetic fixture (seed %d)", config.seed)
        panel = study_fixture(config.seed)
    else:
        panel = ingest_csv(config.input, config.variables)
    if config.real_income:
        panel = real_income(
            panel,
            config.real_income["nominal_gdp"],
            config.real_income["cpi"],
            config.real_income.get("name", "INCOME"),
        )
    if config.annual_input is not None:
        for name, table in load_annual_csv(config.annual_input).items():
            panel = attach_annual(panel, name, table)
    return panel


def _required_variables(config: PipelineConfig) -> list[str]:
    needed: list[str] = []
    if {"kao", "pedroni", "fmols", "pmg"} & set(config.stages):
        needed += [config.dependent, *config.regressors]
    if "causality" in config.stages:
        needed += [config.dependent, config.cause]
    if "ecm" in config.stages:
        needed += [config.dependent, config.cause, config.inst, *config.controls]
    return list(dict.fromkeys(needed))


def run_pipeline(config: PipelineConfig, panel: Panel | None = None) -> report.ReportBundle:
    """Run the enabled stages in order on one panel and collect their report sections.

    The first stage that fails stops the run; the bundle keeps every section
    produced before it and records the failure in bundle.error.

    Raises:
        InputError: If the input cannot be loaded or lacks a required variable
    """
    panel = panel if panel is not None else load_panel(config)
    panel.require(*_required_variables(config))
    bundle = report.ReportBundle()

    described = [v for v in (config.dependent, *config.regressors, config.inst) if v in panel.variables]
    described = list(dict.fromkeys(described)) or list(panel.variables)
    adf = []
    for v in described:
        try:
            adf.append(panel_adf(panel, v, config.aug_lags))
        except PanelEcmError as exc:
            logger.warning("Unit-root pretest skipped for %s: %s", v, exc)
    bundle.add("descriptive", report.descriptive_section(describe(panel, described), adf))

    coint_reports = []
    for stage in (s for s in STAGES if s in config.stages):
        logger.info("Stage %s: starting", stage)
        try:
            if stage == "kao":
                spec = CointSpec.kao(config.dependent, config.regressors, bandwidth=config.bandwidth, aug_lags=config.aug_lags)
                coint_reports.append(kao_test(panel, spec, finite_sample=config.kao_finite_sample))
                bundle.add("cointegration", report.cointegration_section(coint_reports))
            elif stage == "pedroni":
                spec = CointSpec.pedroni(
                    config.dependent,
                    config.regressors,
                    trend=config.pedroni_trend,
                    bandwidth=config.bandwidth,
                    aug_lags=config.aug_lags,
                )
                coint_reports.append(pedroni_test(panel, spec, config.pedroni_variant, config.pedroni_moments))
                bundle.add("cointegration", report.cointegration_section(coint_reports))
            elif stage == "causality":
                forward = dh_test(panel, cause=config.cause, effect=config.dependent, K=config.dh_lags)
                reverse = dh_test(panel, cause=config.dependent, effect=config.cause, K=config.dh_lags)
                bundle.add("causality", report.causality_section([(forward, "primary"), (reverse, "reverse")]))
            elif stage == "fmols":
                spec = CointSpec(config.dependent, tuple(config.regressors), bandwidth=config.bandwidth)
                reports = [fmols_panel(panel, spec, mode) for mode in (FmolsMode.POOLED, FmolsMode.GROUPED)]
                bundle.add("fmols", report.fmols_section(reports))
            elif stage == "pmg":
                fit = pmg_fit(panel, config.dependent, config.regressors, config.ardl_order())
                bundle.add("pmg_long_run", report.pmg_long_run_section(fit))
                bundle.add("pmg_short_run", report.pmg_short_run_section(fit))
            elif stage == "ecm":
                bundle.add("fe_ecm", report.fe_section(_fe_models(panel, config)))
        except PanelEcmError as exc:
            bundle.error = StageError(stage, exc)
            logger.error("Stage %s failed: %s", stage, exc)
            break
        logger.info("Stage %s: done", stage)
    return bundle


def _fe_models(panel: Panel, config: PipelineConfig) -> list:
    design = build_ecm_design(panel, config.inst, config.cause, config.dependent, config.controls)
    models = [fe_estimate(design, time_fe=t, cluster=config.cluster) for t in config.fe_variants()]
    extras = [r for r in config.robustness_regressors if r in panel.variables and r not in config.controls]
    if extras:
        extended = build_ecm_design(panel, config.inst, config.cause, config.dependent, config.controls, extras)
        models.append(fe_estimate(extended, time_fe=False, cluster=config.cluster))
    return models
