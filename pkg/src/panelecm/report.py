"""Report bundle: per-stage sections with JSON and plain-text renderings.

Sections hold JSON-ready dicts built straight from estimator results. The text
renderer only formats those stored numbers (4 decimals plus significance
stars); it never recomputes anything.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import orjson

from .causality import DhReport
from .coint import CointReport
from .ecm import FeEcmReport
from .errors import StageError
from .fmols import FmolsReport
from .pmg import PmgFit

DISPLAY_DECIMALS = 4
STAR_NOTE = "* p < 0.1, ** p < 0.05, *** p < 0.01"

SECTION_ORDER = (
    "descriptive",
    "cointegration",
    "causality",
    "fmols",
    "pmg_long_run",
    "pmg_short_run",
    "fe_ecm",
)


def stars(p_value: float | None) -> str:
    if p_value is None or not math.isfinite(p_value):
        return ""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.1:
        return "*"
    return ""


def _num(value: float | None) -> float | None:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.{DISPLAY_DECIMALS}f}"


def dumps(data: Any) -> bytes:
    return orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n"


# Section builders


def descriptive_section(table: Any, adf: list[Any] | None = None) -> dict[str, Any]:
    """Build the descriptive section from pipeline.describe output and ADF pretests."""
    rows = [
        {
            "entity": e.entity,
            "variable": e.variable,
            "mean": _num(e.mean),
            "std": _num(e.std),
            "n_obs": e.n_obs,
        }
        for e in table.entries
    ]
    section: dict[str, Any] = {
        "title": "Descriptive statistics",
        "variables": list(table.variables),
        "rows": rows,
        "note": "first row: sample mean; second row: standard deviation",
    }
    if adf:
        section["unit_root_pretest"] = {
            "label": "descriptive per-entity ADF statistics (no inference)",
            "rows": [
                {
                    "variable": s.variable,
                    "mean_statistic": _num(s.mean_statistic),
                    "per_entity": {k: _num(v) for k, v in s.per_entity.items()},
                    "aug_lags": s.aug_lags,
                    "deterministic": s.deterministic.value,
                }
                for s in adf
            ],
        }
    return section


def coint_payload(report: CointReport) -> dict[str, Any]:
    return {
        "test": report.test_family,
        "variant": report.variant,
        "tail": report.tail,
        "standardisation": report.standardisation,
        "dependent": report.spec.dependent,
        "regressors": list(report.spec.regressors),
        "cointegrating_vector": report.spec.vector_homogeneity.value,
        "deterministic": report.spec.deterministic.value,
        "bandwidth": report.spec.bandwidth,
        "aug_lags": report.spec.aug_lags,
        "n_panels": report.n_panels,
        "n_periods_used": report.n_periods_used,
        "flags": list(report.flags),
        "statistics": [
            {
                "name": s.name,
                "value": _num(s.value),
                "p_value": _num(s.p_value),
                "stars": stars(s.p_value),
            }
            for s in report.statistics
        ],
    }


def causality_payload(report: DhReport, label: str) -> dict[str, Any]:
    return {
        "label": label,
        "hypothesis": report.hypothesis,
        "cause": report.cause,
        "effect": report.effect,
        "lag_order": report.lag_order,
        "n_panels": report.n_panels,
        "T_used": report.T_used,
        "w_bar": _num(report.w_bar),
        "z_bar": _num(report.z_bar),
        "z_bar_p_value": _num(report.p_values["z_bar"]),
        "z_bar_stars": stars(report.p_values["z_bar"]),
        "z_bar_tilde": _num(report.z_bar_tilde),
        "z_bar_tilde_p_value": _num(report.p_values["z_bar_tilde"]),
        "z_bar_tilde_stars": stars(report.p_values["z_bar_tilde"]),
        "wald_individual": {k: _num(v) for k, v in report.wald_individual.items()},
        "degenerate_entities": list(report.degenerate_entities),
    }


def _coef_rows(
    names: list[str], coefs: dict[str, float], zs: dict[str, float], ps: dict[str, float], stat: str
) -> list[dict[str, Any]]:
    return [
        {
            "name": name,
            "coefficient": _num(coefs[name]),
            stat: _num(zs[name]),
            "p_value": _num(ps[name]),
            "stars": stars(_num(ps[name])),
        }
        for name in names
    ]


def fmols_payload(report: FmolsReport) -> dict[str, Any]:
    return {
        "mode": report.mode.value,
        "bandwidth": report.bandwidth,
        "n_obs_used": report.n_obs_used,
        "rows": _coef_rows(report.regressors, report.coefficients, report.t_stats, report.p_values, "t_stat"),
        "per_entity": [
            {
                "entity": e.entity,
                "coefficients": {k: _num(v) for k, v in e.coefficients.items()},
                "t_stats": {k: _num(v) for k, v in e.t_stats.items()},
                "p_values": {k: _num(v) for k, v in e.p_values.items()},
                "Omega": e.Omega,
            }
            for e in report.per_entity
        ],
        "flags": list(report.flags),
    }


def pmg_long_run_section(fit: PmgFit) -> dict[str, Any]:
    return {
        "title": "PMG long-run coefficients",
        "dependent": fit.dependent,
        "order": {"p": fit.order.p, "q": {r: fit.order.lags(r) for r in fit.regressors}},
        "rows": _coef_rows(fit.regressors, fit.theta, fit.z_stats, fit.p_values, "z_stat"),
        "loglik": _num(fit.loglik),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "n_obs_used": fit.n_obs_used,
        "standard_errors": "inverse information of the concentrated likelihood",
        "flags": list(fit.flags),
    }


def pmg_short_run_section(fit: PmgFit) -> dict[str, Any]:
    names = list(fit.entities[0].short_run)
    mg = fit.mean_group
    pooled = {
        "COINTEQ": (mg.phi, mg.phi_se, mg.phi_z, mg.phi_p),
        **{n: (mg.short_run[n], mg.short_run_se[n], mg.short_run_z[n], mg.short_run_p[n]) for n in names},
    }
    pooled_rows = [
        {
            "name": name,
            "coefficient": _num(coef),
            "se": _num(se),
            "z_stat": _num(z),
            "p_value": _num(p),
            "stars": stars(_num(p)),
        }
        for name, (coef, se, z, p) in pooled.items()
    ]
    entities = []
    for e in fit.entities:
        coefs = {"COINTEQ": e.phi, **e.short_run}
        zs = {"COINTEQ": e.phi_z, **e.short_run_z}
        ps = {"COINTEQ": e.phi_p, **e.short_run_p}
        entities.append({"entity": e.entity, "n_obs": e.n_obs, "rows": _coef_rows(list(coefs), coefs, zs, ps, "z_stat")})
    return {
        "title": "PMG short-run coefficients and speed of adjustment",
        "columns": ["COINTEQ", *names],
        "pooled": pooled_rows,
        "entities": entities,
        "note": "COINTEQ is the speed of adjustment phi; pooled row is the cross-entity mean with its across-entity standard error",
    }


def fe_payload(report: FeEcmReport) -> dict[str, Any]:
    return {
        "dependent": report.dependent,
        "entity_fe": report.entity_fe,
        "time_fe": report.time_fe,
        "standard_errors": report.se_type,
        "n_obs": report.n_obs,
        "n_entities": report.n_entities,
        "dof": report.dof,
        "r2_within": _num(report.r2_within),
        "rows": [
            {
                "name": name,
                "coefficient": _num(report.coefficients[name]),
                "z_stat": _num(report.z_stats[name]),
                "p_value": _num(report.p_values[name]),
                "stars": stars(report.p_values[name]),
            }
            for name in report.columns
        ],
        "flags": list(report.flags),
    }


def cointegration_section(reports: list[CointReport]) -> dict[str, Any]:
    return {"title": "Panel cointegration tests", "tests": [coint_payload(r) for r in reports]}


def causality_section(reports: list[tuple[DhReport, str]]) -> dict[str, Any]:
    return {
        "title": "Granger non-causality (Dumitrescu-Hurlin)",
        "tests": [causality_payload(r, label) for r, label in reports],
    }


def fmols_section(reports: list[FmolsReport]) -> dict[str, Any]:
    return {"title": "Panel FMOLS", "estimates": [fmols_payload(r) for r in reports]}


def fe_section(reports: list[FeEcmReport]) -> dict[str, Any]:
    return {
        "title": "Fixed-effect error-correction regression",
        "note": "L. is the first lag, D. the first difference; z statistics in parentheses",
        "models": [fe_payload(r) for r in reports],
    }


# Bundle


@dataclass
class ReportBundle:
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    error: StageError | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def add(self, name: str, payload: dict[str, Any]) -> None:
        self.sections[name] = payload

    def section_names(self) -> list[str]:
        known = [n for n in SECTION_ORDER if n in self.sections]
        return known + [n for n in self.sections if n not in SECTION_ORDER]

    def raise_for_error(self) -> None:
        if self.error is not None:
            raise self.error

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"sections": {n: self.sections[n] for n in self.section_names()}}
        data["star_convention"] = STAR_NOTE
        if self.error is not None:
            data["error"] = {"stage": self.error.stage, "message": str(self.error.cause)}
        return data

    def to_json(self) -> bytes:
        return dumps(self.to_dict())

    def section_json(self, name: str) -> bytes:
        return dumps({"section": name, **self.sections[name]})

    def write(self, output_dir: str | Path) -> list[Path]:
        """Write one JSON document per section, plus report.json and report.txt."""
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in self.section_names():
            path = out / f"{name}.json"
            path.write_bytes(self.section_json(name))
            written.append(path)
        (out / "report.json").write_bytes(self.to_json())
        (out / "report.txt").write_text(render_text(self))
        written += [out / "report.json", out / "report.txt"]
        return written


# Plain-text rendering


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    out = [line, "-" * len(line)]
    out += ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in rows]
    return out


def _starred(value: float | None, mark: str) -> str:
    return f"{_fmt(value)}{mark}"


def _render_descriptive(s: dict[str, Any]) -> list[str]:
    entities = list(dict.fromkeys(r["entity"] for r in s["rows"]))
    by_key = {(r["entity"], r["variable"]): r for r in s["rows"]}
    rows = []
    for entity in entities:
        rows.append([entity, "mean", *(_fmt(by_key[(entity, v)]["mean"]) for v in s["variables"])])
        rows.append(["", "std", *(_fmt(by_key[(entity, v)]["std"]) for v in s["variables"])])
        rows.append(["", "N", *(str(by_key[(entity, v)]["n_obs"]) for v in s["variables"])])
    lines = _table(["entity", "", *s["variables"]], rows)
    pretest = s.get("unit_root_pretest")
    if pretest:
        lines += ["", f"Unit-root pretest ({pretest['label']})"]
        lines += _table(
            ["variable", "mean ADF"], [[r["variable"], _fmt(r["mean_statistic"])] for r in pretest["rows"]]
        )
    return lines


def _render_coint(s: dict[str, Any]) -> list[str]:
    lines = []
    for test in s["tests"]:
        variant = f" ({test['variant']})" if test.get("variant") else ""
        lines.append(f"{test['test']}{variant}: {test['dependent']} on {', '.join(test['regressors'])}")
        lines.append(
            f"  cointegrating vector: {test['cointegrating_vector']}; deterministic: {test['deterministic']}; "
            f"panels: {test['n_panels']}; periods used: {test['n_periods_used']}; "
            f"null moments: {test['standardisation']}"
        )
        rows = [[st["name"], _starred(st["value"], st["stars"]), _fmt(st["p_value"])] for st in test["statistics"]]
        lines += _table(["statistic", "value", "p-value"], rows)
        lines.append("")
    return lines


def _render_causality(s: dict[str, Any]) -> list[str]:
    rows = [
        [
            t["hypothesis"],
            _fmt(t["w_bar"]),
            _starred(t["z_bar"], t["z_bar_stars"]),
            _starred(t["z_bar_tilde"], t["z_bar_tilde_stars"]),
            str(t["T_used"]),
        ]
        for t in s["tests"]
    ]
    return _table(["null hypothesis", "W-bar", "Z-bar", "Z-bar tilde", "T used"], rows)


def _render_coef_rows(rows: list[dict[str, Any]], stat: str) -> list[list[str]]:
    return [[r["name"], _starred(r["coefficient"], r["stars"]), f"({_fmt(r[stat])})"] for r in rows]


def _render_fmols(s: dict[str, Any]) -> list[str]:
    lines = []
    for est in s["estimates"]:
        lines.append(f"{est['mode']} estimation (bandwidth {est['bandwidth']}, observations {est['n_obs_used']})")
        lines += _table(["variable", "coefficient", "t-stat"], _render_coef_rows(est["rows"], "t_stat"))
        lines.append("")
    return lines


def _render_pmg_long(s: dict[str, Any]) -> list[str]:
    lines = [f"converged: {s['converged']} after {s['iterations']} iterations; log-likelihood {_fmt(s['loglik'])}"]
    return lines + _table(["variable", "coefficient", "z-stat"], _render_coef_rows(s["rows"], "z_stat"))


def _render_pmg_short(s: dict[str, Any]) -> list[str]:
    header = ["entity", *s["columns"]]
    rows = [["Pooled", *(_starred(r["coefficient"], r["stars"]) for r in s["pooled"])]]
    rows.append(["", *(f"({_fmt(r['z_stat'])})" for r in s["pooled"])])
    for e in s["entities"]:
        rows.append([e["entity"], *(_starred(r["coefficient"], r["stars"]) for r in e["rows"])])
        rows.append(["", *(f"({_fmt(r['z_stat'])})" for r in e["rows"])])
    return _table(header, rows)


def _render_fe(s: dict[str, Any]) -> list[str]:
    models = s["models"]
    lookup = [{r["name"]: r for r in m["rows"]} for m in models]
    names = list(dict.fromkeys(r["name"] for m in models for r in m["rows"]))
    header = ["variable", *(f"({i + 1})" for i in range(len(models)))]
    rows = []
    for name in names:
        cells = [rows_by_name.get(name) for rows_by_name in lookup]
        rows.append([name, *(_starred(c["coefficient"], c["stars"]) if c else "" for c in cells)])
        rows.append(["", *(f"({_fmt(c['z_stat'])})" if c else "" for c in cells)])
    rows.append(["Time fixed-effect", *("Yes" if m["time_fe"] else "No" for m in models)])
    rows.append(["Standard errors", *(m["standard_errors"] for m in models)])
    rows.append(["N", *(str(m["n_obs"]) for m in models)])
    return _table(header, rows)


_RENDERERS = {
    "descriptive": _render_descriptive,
    "cointegration": _render_coint,
    "causality": _render_causality,
    "fmols": _render_fmols,
    "pmg_long_run": _render_pmg_long,
    "pmg_short_run": _render_pmg_short,
    "fe_ecm": _render_fe,
}


def render_section(name: str, section: dict[str, Any]) -> str:
    title = section.get("title", name)
    lines = [title, "=" * len(title), *_RENDERERS[name](section)]
    return "\n".join(line.rstrip() for line in lines).rstrip() + "\n"


def render_text(bundle: ReportBundle) -> str:
    parts = [render_section(name, bundle.sections[name]) for name in bundle.section_names()]
    parts.append(f"Note: {STAR_NOTE}\n")
    if bundle.error is not None:
        parts.append(f"Stage '{bundle.error.stage}' failed: {bundle.error.cause}\n")
    return "\n".join(parts)
