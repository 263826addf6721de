"""Command-line interface for panelecm."""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import click
import orjson

from . import __version__, report
from .causality import dh_test
from .coint import CointSpec, kao_test, pedroni_test
from .ecm import build_ecm_design, fe_estimate
from .errors import InputError, PanelEcmError
from .fmols import FmolsMode, fmols_panel
from .panel import Panel
from .pipeline import (
    STAGES,
    PipelineConfig,
    default_workers,
    describe,
    ingest_csv,
    load_config,
    load_panel,
    run_pipeline,
    write_csv,
)
from .pmg import ArdlOrder, pmg_fit
from .simulate import DgpFamily, DgpSpec, McTest, monte_carlo, synth_dgp


class InputFailure(click.ClickException):
    """Bad input data or configuration."""

    exit_code = 2


class StageFailure(click.ClickException):
    """A well-formed input that could not be estimated."""

    exit_code = 3


class Context:
    """CLI context holding the loaded configuration and output mode."""

    def __init__(self, json_output: bool = False, config_path: Path | None = None):
        self.json_output = json_output
        self.config_path = config_path
        self._config: PipelineConfig | None = None

    @property
    def config(self) -> PipelineConfig:
        if self._config is None:
            with errors():
                self._config = load_config(self.config_path) if self.config_path else PipelineConfig()
        return self._config

    def panel(self, input_path: Path | None = None) -> Panel:
        with errors():
            return load_panel(self.config.with_overrides(input=input_path))


pass_context = click.make_pass_decorator(Context, ensure=True)


@contextmanager
def errors() -> Iterator[None]:
    """Translate library errors into click exceptions with the right exit code."""
    try:
        yield
    except InputError as e:
        raise InputFailure(str(e)) from None
    except PanelEcmError as e:
        raise StageFailure(str(e)) from None


def output(ctx: Context, data: Any, human_format: str | None = None) -> None:
    """Output data in JSON or human-readable format."""
    if ctx.json_output or human_format is None:
        click.echo(report.dumps(data).decode(), nl=False)
    else:
        click.echo(human_format, nl=False)


def _parse_params(items: tuple[str, ...]) -> dict[str, Any]:
    params = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InputFailure(f"Parameters must look like key=value, got {item!r}")
        try:
            params[key] = orjson.loads(raw)
        except orjson.JSONDecodeError:
            params[key] = raw
    return params


def _emit_section(ctx: Context, name: str, section: dict[str, Any]) -> None:
    output(ctx, {"section": name, **section}, report.render_section(name, section))


input_option = click.option(
    "-i", "--input", "input_path", type=click.Path(path_type=Path), help="Panel CSV (defaults to the built-in fixture)"
)


@click.group()
@click.version_option(__version__, prog_name="panelecm")
@click.option("--json", "json_output", is_flag=True, help="Output in JSON format")
@click.option("-c", "--config", "config_path", type=click.Path(path_type=Path), help="JSON configuration file")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr")
@click.pass_context
def main(ctx, json_output: bool, config_path: Path | None, verbose: bool):
    """panelecm - panel cointegration, causality and error-correction estimation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    ctx.ensure_object(Context)
    ctx.obj.json_output = json_output
    ctx.obj.config_path = config_path


@main.command()
@click.argument("input_path", type=click.Path(path_type=Path))
@click.option("-o", "--out", type=click.Path(path_type=Path), help="Write the parsed panel back out as CSV")
@pass_context
def ingest(ctx: Context, input_path: Path, out: Path | None):
    """Parse and validate a long-format panel CSV."""
    with errors():
        panel = ingest_csv(input_path, ctx.config.variables)
    if out is not None:
        write_csv(panel, out)
    data = {
        "entities": list(panel.entities),
        "periods": [str(panel.periods[0]), str(panel.periods[-1])],
        "n_periods": panel.n_periods,
        "variables": list(panel.variables),
        "rows_per_variable": panel.n_entities * panel.n_periods,
    }
    human = (
        f"{panel.n_entities} entities x {panel.n_periods} quarters ({data['periods'][0]}-{data['periods'][1]})\n"
        f"variables: {', '.join(panel.variables)}\n"
        f"rows per variable: {data['rows_per_variable']}\n"
    )
    output(ctx, data, human)


@main.command("describe")
@input_option
@pass_context
def describe_cmd(ctx: Context, input_path: Path | None):
    """Mean, standard deviation and N per entity and pooled."""
    panel = ctx.panel(input_path)
    with errors():
        section = report.descriptive_section(describe(panel))
    _emit_section(ctx, "descriptive", section)


@main.command()
@click.argument("test", type=click.Choice(["kao", "pedroni"]))
@input_option
@click.option("--bandwidth", type=click.IntRange(0), help="Bartlett bandwidth")
@click.option("--aug-lags", type=click.IntRange(0), help="ADF augmentation lags")
@click.option("--variant", type=click.Choice(["panel", "group"]), help="Pedroni statistic family")
@click.option("--trend/--no-trend", default=None, help="Pedroni panel-specific trends")
@click.option("--moments", type=click.Choice(["table", "simulated"]), help="Source of Pedroni null moments")
@click.option("--finite-sample/--asymptotic", "finite_sample", default=None, help="Kao null standardisation")
@pass_context
def coint(
    ctx: Context,
    test: str,
    input_path: Path | None,
    bandwidth: int | None,
    aug_lags: int | None,
    variant: str | None,
    trend: bool | None,
    moments: str | None,
    finite_sample: bool | None,
):
    """Kao or Pedroni residual-based cointegration test."""
    config = ctx.config.with_overrides(
        bandwidth=bandwidth,
        aug_lags=aug_lags,
        pedroni_variant=variant,
        pedroni_trend=trend,
        pedroni_moments=moments,
        kao_finite_sample=finite_sample,
    )
    panel = ctx.panel(input_path)
    with errors():
        if test == "kao":
            spec = CointSpec.kao(config.dependent, config.regressors, bandwidth=config.bandwidth, aug_lags=config.aug_lags)
            result = kao_test(panel, spec, finite_sample=config.kao_finite_sample)
        else:
            spec = CointSpec.pedroni(
                config.dependent,
                config.regressors,
                trend=config.pedroni_trend,
                bandwidth=config.bandwidth,
                aug_lags=config.aug_lags,
            )
            result = pedroni_test(panel, spec, config.pedroni_variant, config.pedroni_moments)
    _emit_section(ctx, "cointegration", report.cointegration_section([result]))


@main.command()
@input_option
@click.option("--cause", help="Candidate causal variable")
@click.option("--effect", help="Effect variable")
@click.option("-k", "--lags", type=click.IntRange(1), help="Lag order K")
@pass_context
def causality(ctx: Context, input_path: Path | None, cause: str | None, effect: str | None, lags: int | None):
    """Dumitrescu-Hurlin Granger non-causality test."""
    config = ctx.config.with_overrides(dh_lags=lags)
    panel = ctx.panel(input_path)
    with errors():
        result = dh_test(panel, cause=cause or config.cause, effect=effect or config.dependent, K=config.dh_lags)
    _emit_section(ctx, "causality", report.causality_section([(result, "primary")]))


@main.command()
@input_option
@click.option(
    "--mode", type=click.Choice(["pooled", "grouped", "both"]), default="both", show_default=True, help="Estimator"
)
@click.option("--bandwidth", type=click.IntRange(0), help="Bartlett bandwidth")
@pass_context
def fmols(ctx: Context, input_path: Path | None, mode: str, bandwidth: int | None):
    """Panel fully modified OLS."""
    config = ctx.config.with_overrides(bandwidth=bandwidth)
    panel = ctx.panel(input_path)
    modes = [FmolsMode.POOLED, FmolsMode.GROUPED] if mode == "both" else [FmolsMode(mode)]
    spec = CointSpec(config.dependent, tuple(config.regressors), bandwidth=config.bandwidth)
    with errors():
        results = [fmols_panel(panel, spec, m) for m in modes]
    _emit_section(ctx, "fmols", report.fmols_section(results))


@main.command()
@input_option
@click.option("-p", "ardl_p", type=click.IntRange(1), help="Lags of the dependent variable")
@click.option("-q", "ardl_q", multiple=True, help="Differenced lags per regressor, as VAR=N")
@click.option("--short-run", is_flag=True, help="Also print the per-entity short-run table")
@pass_context
def pmg(ctx: Context, input_path: Path | None, ardl_p: int | None, ardl_q: tuple[str, ...], short_run: bool):
    """Pooled Mean Group estimation of the error-correction model."""
    q = {**ctx.config.ardl_q, **{k: int(v) for k, v in _parse_params(ardl_q).items()}}
    config = ctx.config.with_overrides(ardl_p=ardl_p, ardl_q=q)
    panel = ctx.panel(input_path)
    with errors():
        order: ArdlOrder = config.ardl_order()
        fit = pmg_fit(panel, config.dependent, config.regressors, order)
    long_run = report.pmg_long_run_section(fit)
    if not short_run:
        _emit_section(ctx, "pmg_long_run", long_run)
        return
    short = report.pmg_short_run_section(fit)
    output(
        ctx,
        {"pmg_long_run": long_run, "pmg_short_run": short},
        report.render_section("pmg_long_run", long_run) + "\n" + report.render_section("pmg_short_run", short),
    )


@main.command()
@input_option
@click.option("--time-fe", type=click.Choice(["yes", "no", "both"]), help="Period fixed effects")
@click.option("--cluster", is_flag=True, default=None, help="Cluster standard errors by entity")
@click.option("-x", "--extra", multiple=True, help="Extra regressor for the robustness pass")
@pass_context
def ecm(ctx: Context, input_path: Path | None, time_fe: str | None, cluster: bool | None, extra: tuple[str, ...]):
    """Fixed-effect error-correction regression with the INST x FLOW interaction."""
    fe = {"yes": True, "no": False, "both": "both", None: None}[time_fe]
    config = ctx.config.with_overrides(time_fe=fe, cluster=cluster)
    panel = ctx.panel(input_path)
    with errors():
        design = build_ecm_design(panel, config.inst, config.cause, config.dependent, config.controls)
        models = [fe_estimate(design, time_fe=t, cluster=config.cluster) for t in config.fe_variants()]
        if extra:
            extended = build_ecm_design(panel, config.inst, config.cause, config.dependent, config.controls, extra)
            models.append(fe_estimate(extended, time_fe=False, cluster=config.cluster))
    _emit_section(ctx, "fe_ecm", report.fe_section(models))


@main.command()
@input_option
@click.option("-o", "--output-dir", type=click.Path(path_type=Path), help="Write per-section JSON and report.txt here")
@click.option("-s", "--stage", "stages", multiple=True, type=click.Choice(STAGES), help="Run only these stages")
@click.option("--seed", type=int, help="Seed for the built-in fixture")
@pass_context
def pipeline(ctx: Context, input_path: Path | None, output_dir: Path | None, stages: tuple[str, ...], seed: int | None):
    """Run the full estimation pipeline and emit the report bundle."""
    config = ctx.config.with_overrides(
        input=input_path, output_dir=output_dir, stages=list(stages) or None, seed=seed
    )
    with errors():
        bundle = run_pipeline(config)
    if config.output_dir is not None:
        bundle.write(config.output_dir)
    if ctx.json_output:
        click.echo(bundle.to_json().decode(), nl=False)
    else:
        click.echo(report.render_text(bundle), nl=False)
    if bundle.error is not None:
        raise StageFailure(str(bundle.error))


@main.command()
@click.argument("family", type=click.Choice([f.value for f in DgpFamily]))
@click.option("-n", "n_entities", type=int, default=6, show_default=True, help="Number of entities")
@click.option("-t", "n_periods", type=int, default=41, show_default=True, help="Number of quarters")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option("--param", "params", multiple=True, help="Family parameter as KEY=VALUE (JSON values)")
@click.option("-o", "--out", type=click.Path(path_type=Path), help="Write the panel as CSV")
@pass_context
def simulate(
    ctx: Context, family: str, n_entities: int, n_periods: int, seed: int, params: tuple[str, ...], out: Path | None
):
    """Draw a synthetic panel from one of the data-generating processes."""
    with errors():
        panel = synth_dgp(DgpSpec(family, n_entities, n_periods, _parse_params(params), seed))
    if out is not None:
        write_csv(panel, out)
    data = {
        "family": family,
        "seed": seed,
        "entities": list(panel.entities),
        "n_periods": panel.n_periods,
        "variables": list(panel.variables),
        "output": str(out) if out else None,
    }
    human = f"{family}: {panel!r}\n" + (f"written to {out}\n" if out else "")
    output(ctx, data, human)


@main.command()
@click.argument("test", type=click.Choice([t.value for t in McTest]))
@click.option("--family", type=click.Choice([f.value for f in DgpFamily]), default="independent-random-walks", show_default=True)
@click.option("-n", "n_entities", type=int, default=6, show_default=True, help="Number of entities")
@click.option("-t", "n_periods", type=int, default=40, show_default=True, help="Number of quarters")
@click.option("-r", "--reps", type=int, default=2000, show_default=True, help="Replications")
@click.option("--nominal", type=float, default=0.05, show_default=True, help="Nominal test level")
@click.option("--seed", type=int, default=0, show_default=True, help="Root seed")
@click.option("--param", "params", multiple=True, help="DGP parameter as KEY=VALUE (JSON values)")
@click.option("--option", "options", multiple=True, help="Test option as KEY=VALUE (bandwidth, aug_lags, K, trend, moments, finite_sample)")
@click.option("-w", "--workers", type=click.IntRange(0), help="Worker processes (default from PANELECM_WORKERS)")
@pass_context
def validate(
    ctx: Context,
    test: str,
    family: str,
    n_entities: int,
    n_periods: int,
    reps: int,
    nominal: float,
    seed: int,
    params: tuple[str, ...],
    options: tuple[str, ...],
    workers: int | None,
):
    """Monte Carlo rejection rates of a test under a synthetic DGP."""
    with errors():
        dgp = DgpSpec(family, n_entities, n_periods, _parse_params(params), seed)
        result = monte_carlo(
            test,
            dgp,
            reps,
            nominal,
            _parse_params(options),
            workers if workers is not None else default_workers(),
        )
    data = {
        "test": result.test,
        "family": result.family,
        "reps": result.reps,
        "nominal": result.nominal,
        "rates": result.rates,
        "standard_errors": result.standard_errors,
        "n_errors": result.n_errors,
        "errors": result.error_messages,
    }
    lines = [f"{result.test} on {result.family}: {result.n_completed}/{result.reps} replications, nominal {nominal}"]
    for name, rate in result.rates.items():
        lines.append(f"  {name}: {rate:.4f} (se {result.standard_errors[name]:.4f})")
    if result.n_errors:
        lines.append(f"  replications with errors: {result.n_errors}")
    output(ctx, data, "\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
