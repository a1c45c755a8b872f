from __future__ import annotations

import logging
import os
import warnings
from typing import Any, Dict, List, Optional

import click

from svcva import __version__
from svcva.core.config import (
    KEYS,
    RunConfig,
    list_experiments,
    load_experiment,
    parse_config,
)
from svcva.core.errors import SvcvaError
from svcva.core.parameter_sets import ParameterSetRegistry
from svcva.core.progress_bar import ProgressBar
from svcva.core.reporting import (
    build_report,
    issue_from_exception,
    now_iso,
    render_text,
)
from svcva.core.sweep import frame_to_text, run_rho_sweep, run_sensitivity

logger = logging.getLogger(__name__)


def _list_experiments() -> int:
    items = list_experiments()
    if not items:
        click.echo("No experiments found.")
        return 0
    click.echo("Shipped experiments:")
    for name, description in items:
        click.echo(f"  {name:22} {description}")
    return 0


def _list_sets(registry: ParameterSetRegistry) -> int:
    """
    List parameter sets from (in order):
    - any --sets-dir directories,
    - SVCVA_PARAMETER_SETS_DIR (':' separated),
    - packaged defaults under svcva/parameter_sets/.
    """
    listed = registry.available()
    if not listed:
        click.echo("No parameter sets found.")
        return 0
    click.echo("Available parameter sets (first match wins):")
    for sid, kind, label, d in listed:
        click.echo(f"  {sid:14} {kind:8} {label}   [from: {d}]")
    return 0


def _parse_set_params(items: tuple[str, ...]) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise click.UsageError(f"--set-param expects key=value, got '{item}'")
        key, value = (p.strip() for p in item.split("=", 1))
        out[key] = value
    return out


def _progress_total(config: RunConfig) -> int:
    n_sets = max(len(config.intensity.set), 1)
    if config.mode == "sensitivity":
        return n_sets * max(len(config.sensitivity.grid), 1)
    return n_sets * len(config.sweep.rho)


def _provenance() -> Dict[str, Any]:
    return {
        "tool_version": __version__,
        "git_rev": os.environ.get("GIT_REV"),
        "run_id": os.environ.get("RUN_ID"),
    }


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", default=None, help="Run configuration file (key = value)")
@click.option("--experiment", default=None, help="Load a shipped experiment by name")
@click.option("--model", type=click.Choice(["sabr", "heston", "hw"]), default=None, help="Volatility model")
@click.option("--intensity", type=click.Choice(["vasicek", "cir"]), default=None, help="Intensity model")
@click.option(
    "--set",
    "sets",
    default=None,
    help="Intensity parameter set(s), comma separated (e.g. 'cir-1,cir-2' or '1,2')",
)
@click.option("--T", "maturity", type=float, default=None, help="Maturity in years")
@click.option("--strike", type=float, default=None, help="Strike level")
@click.option("--rho-grid", default=None, help="rho values as a:b:step or a comma list")
@click.option("--nu", type=float, default=None, help="Correlation of the asset and intensity noises")
@click.option("--methods", default=None, help="Comma list out of mc, first, second")
@click.option("--paths", type=int, default=None, help="Monte Carlo paths")
@click.option("--steps", type=int, default=None, help="Monte Carlo time steps")
@click.option("--seed", type=int, default=None, help="Monte Carlo seed")
@click.option("--dt-quad", type=float, default=None, help="Time step of the quadrature grids")
@click.option("--out", default=None, help="CSV output path ('{set}' is replaced by the set id)")
@click.option(
    "--set-param",
    multiple=True,
    default=[],
    help="Override any config key, e.g. --set-param mc.workers=4 (repeatable)",
)
@click.option(
    "--sets-dir",
    multiple=True,
    default=[],
    help="Directory with parameter sets (can be used multiple times). "
    "Overrides SVCVA_PARAMETER_SETS_DIR and packaged defaults.",
)
@click.option("--report", default=None, help="Write JSON report to this path")
@click.option(
    "--print-json",
    is_flag=True,
    help="Print JSON report to stdout (in addition to text summary)",
)
@click.option("--list-experiments", is_flag=True, help="List shipped experiments and exit.")
@click.option("--list-sets", is_flag=True, help="List available parameter sets and exit.")
@click.option("--progress", is_flag=True, help="Show a progress bar on stderr.")
@click.option("--debug", is_flag=True, help="Debug logging.")
def main(
    config_path: str | None,
    experiment: str | None,
    model: str | None,
    intensity: str | None,
    sets: str | None,
    maturity: float | None,
    strike: float | None,
    rho_grid: str | None,
    nu: float | None,
    methods: str | None,
    paths: int | None,
    steps: int | None,
    seed: int | None,
    dt_quad: float | None,
    out: str | None,
    set_param: tuple[str, ...],
    sets_dir: tuple[str, ...],
    report: str | None,
    print_json: bool,
    list_experiments: bool,
    list_sets: bool,
    progress: bool,
    debug: bool,
):
    """
    CVA of a vulnerable call under stochastic volatility and stochastic
    intensity: rho sweeps and parameter sensitivities as CSV.

    Examples:
      svcva --list-experiments
      svcva --experiment heston-cir-T05 --out out/heston_cir_{set}.csv
      svcva --model sabr --intensity cir --set 1,2 --T 1 --methods first,second
    """
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if list_experiments:
        raise SystemExit(_list_experiments())

    registry = ParameterSetRegistry(list(sets_dir or []))
    if list_sets:
        raise SystemExit(_list_sets(registry))

    if config_path and experiment:
        raise click.UsageError("use either --config or --experiment, not both")

    started = now_iso()
    flags: Dict[str, Any] = {
        "model.kind": model,
        "intensity.kind": intensity,
        "intensity.set": sets,
        "market.T": maturity,
        "market.strike": strike,
        "sweep.rho": rho_grid,
        "sweep.nu": nu,
        "sweep.methods": methods,
        "mc.paths": paths,
        "mc.steps": steps,
        "mc.seed": seed,
        "quad.dt": dt_quad,
        "output.path": out,
    }
    for key, value in _parse_set_params(set_param).items():
        if key not in KEYS:
            raise click.UsageError(f"--set-param: unknown key '{key}'")
        flags[key] = value

    run_meta: Dict[str, Any] = {"config_source": config_path or experiment}
    config: Optional[RunConfig] = None
    bar: Optional[ProgressBar] = None
    try:
        text: Optional[str] = None
        source: Optional[str] = None
        if experiment:
            text, source = load_experiment(experiment)
        elif config_path:
            with open(config_path, "r", encoding="utf-8") as f:
                text = f.read()
            source = config_path

        # Feller warnings are collected again by the run itself
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            config = parse_config(text, flags, source, registry=registry)
        run_meta["mode"] = config.mode

        if progress:
            bar = ProgressBar(_progress_total(config), prefix=config.mode)
        runner = run_sensitivity if config.mode == "sensitivity" else run_rho_sweep
        engine_result = runner(config, registry, bar.update if bar else None)
    except (SvcvaError, OSError) as e:
        logger.debug("run failed", exc_info=True)
        engine_result = {
            "ok": False,
            "errors": [issue_from_exception(e)],
            "warnings": [],
            "infos": [],
            "metrics": {},
        }
        if isinstance(e, OSError):
            engine_result["errors"][0]["code"] = "CONFIG_ERROR"
    finally:
        if bar is not None:
            bar.finish()

    summary = engine_result.get("summary") or {}
    run_meta.update(
        pairing=summary.get("pairing"),
        sets=list(summary.get("sets") or []),
        outputs=list(engine_result.get("outputs") or []),
    )
    rep = build_report(engine_result, run_meta, started_at=started, provenance=_provenance())

    # without --out the tables go to stdout and the summary to stderr
    to_stdout = config is not None and not config.output.path and rep.ok
    if to_stdout:
        frames = engine_result.get("frames") or {}
        headers = engine_result.get("headers") or {}
        chunks: List[str] = [frame_to_text(frames[k], headers[k]) for k in frames]
        click.echo("\n".join(chunks), nl=False)

    click.echo(render_text(rep), err=to_stdout)
    if print_json:
        click.echo(rep.to_json())
    if report:
        rep.write_json(report)

    raise SystemExit(rep.exit_code())
