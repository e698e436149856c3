#!/usr/bin/env python3
"""
FIE Benchmark - Main Entry Point
Monte-Carlo comparison of the full information estimator and the EKF on the
scalar example x+ = 0.9 x + w, y = x**3 + v.
"""

import sys
from pathlib import Path
from typing import List, Optional

import click
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from core.bench import (
    DEFAULT_OUTPUT_DIR,
    FAILURE_THRESHOLD,
    RunConfig,
    RunSummary,
    failure_rate,
    run_monte_carlo,
    run_sweep,
)
from core.comparison_functions import CertificateVerdict
from core.cost import validate_rgas
from core.errors import CertificateError, DomainError, FieBenchError
from core.fie import SolverOptions
from core.presets import PRESETS, SWEEP_PRESETS, Estimator, get_preset
from core.system_model import example_system
from utils.logging_setup import setup_logging

# Load environment variables - try local first, then default
load_dotenv('.env.local')
load_dotenv()

console = Console()

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CERTIFICATE = 3
EXIT_SOLVER_FAILURES = 4


def _parse_estimators(ctx, param, value: str):
    names = [part.strip().lower() for part in value.split(',') if part.strip()]
    try:
        estimators = tuple(Estimator(name) for name in names)
    except ValueError:
        raise click.BadParameter(f"choose from {', '.join(e.value for e in Estimator)}") from None
    if not estimators:
        raise click.BadParameter("select at least one estimator")
    return estimators


def _size_options(func):
    """--instances/--horizon/--seed/--workers/--output-dir shared by run and sweep"""
    options = [
        click.option('--instances', '-n', type=click.IntRange(min=1), help='Number of random instances'),
        click.option('--horizon', '-T', type=click.IntRange(min=0), help='Final time T'),
        click.option('--seed', type=click.IntRange(min=0), help='Base seed'),
        click.option('--estimators', default='fie,ekf', show_default=True, callback=_parse_estimators,
                     help='Comma-separated subset of fie,ekf'),
        click.option('--restarts', type=click.IntRange(min=1), help='FIE solver starts per time step'),
        click.option('--workers', '-w', type=click.IntRange(min=1), default=1, show_default=True,
                     envvar='FIE_BENCH_WORKERS', help='Worker processes'),
        click.option('--output-dir', '-o', type=click.Path(file_okay=False, path_type=Path),
                     default=DEFAULT_OUTPUT_DIR, show_default=True, envvar='FIE_BENCH_OUTPUT_DIR',
                     help='Where result files go'),
        click.option('--allow-uncertified', is_flag=True, help='Run even if the cost fails its certificate'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _cost_options(func):
    options = [
        click.option('--preset', '-p', default='paper-exp', show_default=True,
                     type=click.Choice(list(PRESETS)), help='Named experiment'),
        click.option('--b2', type=float, help='Override the discount parameter b2'),
        click.option('--lambda-w', type=click.FloatRange(0, 1), help='Override lambda_w'),
        click.option('--lambda-v', type=click.FloatRange(0, 1), help='Override lambda_v'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _solver_options(restarts: Optional[int]) -> Optional[SolverOptions]:
    return SolverOptions(restarts=restarts) if restarts else None


def print_summary(summary: RunSummary):
    table = Table(title=f"Estimation errors ({summary.preset or 'custom'}, seed {summary.seed})")
    table.add_column("Estimator", style="cyan")
    table.add_column("Pooled std", style="bold white", justify="right")
    table.add_column("Mean |e|", style="green", justify="right")
    table.add_column("Max |e|", style="yellow", justify="right")
    table.add_column("Samples", style="blue", justify="right")
    table.add_column("Failed", style="red", justify="right")
    for est in summary.estimators.values():
        table.add_row(
            est.estimator.upper(),
            f"{est.pooled_std:.4f}",
            f"{est.pooled_mean_abs:.4f}",
            f"{est.max_abs:.4f}",
            str(est.n_samples),
            str(est.failed_instances),
        )
    console.print(table)
    fie = summary.estimators.get(Estimator.FIE.value)
    if fie and (fie.sandwich_violations or fie.infeasible_solves):
        console.print(
            f"⚠️  {fie.sandwich_violations} optimality-sandwich violations, "
            f"{fie.infeasible_solves} infeasible solves", style="yellow"
        )


def print_verdicts(rows: List[tuple]):
    table = Table(title="Certificate check")
    table.add_column("Certificate", style="cyan")
    table.add_column("Condition", style="white")
    table.add_column("Margin", justify="right")
    table.add_column("Verdict")
    for label, verdict in rows:
        status = "[green]✅ pass[/green]" if verdict.passed else "[red]❌ fail[/red]"
        condition = verdict.condition.value + (f" ({verdict.detail})" if verdict.detail else "")
        table.add_row(label, condition, f"{verdict.margin:.6g}", status)
    console.print(table)


@click.group()
@click.option('--log-level', default='INFO', show_default=True, envvar='FIE_BENCH_LOG_LEVEL',
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help='Logging verbosity')
def cli(log_level):
    """FIE Benchmark - full information estimation under bounded disturbances"""
    setup_logging(log_level)


@cli.command()
@_cost_options
@_size_options
def run(preset, b2, lambda_w, lambda_v, instances, horizon, seed, estimators, restarts, workers,
        output_dir, allow_uncertified):
    """🎯 Run the Monte-Carlo benchmark and write result files"""
    config = RunConfig.from_preset(
        preset,
        b2=b2,
        lambda_w=lambda_w,
        lambda_v=lambda_v,
        instances=instances,
        horizon=horizon,
        seed=seed,
        estimators=estimators,
        solver=_solver_options(restarts),
        workers=workers,
        output_dir=output_dir,
        allow_uncertified=allow_uncertified,
    )
    console.print(f"🔍 {preset}: {config.scenario.instances} instances, T={config.scenario.horizon}, "
                  f"seed {config.scenario.seed}", style="bold blue")
    _, summary = run_monte_carlo(config)
    print_summary(summary)
    console.print(f"📁 Results written to {config.output_dir}")

    if failure_rate(summary) > FAILURE_THRESHOLD:
        console.print(f"❌ {summary.failed_instances} of {summary.instances} instances failed", style="bold red")
        return EXIT_SOLVER_FAILURES
    console.print("✅ Done", style="bold green")
    return EXIT_OK


@cli.command()
@_cost_options
def certify(preset, b2, lambda_w, lambda_v):
    """🔒 Check a cost against the example's i-IOSS certificates"""
    config = RunConfig.from_preset(preset, b2=b2, lambda_w=lambda_w, lambda_v=lambda_v)
    rows = []
    own: Optional[CertificateVerdict] = None
    for polynomial in (False, True):
        _, certificate = example_system(polynomial_certificate=polynomial)
        verdict = validate_rgas(config.cost, certificate)
        rows.append(("polynomial beta" if polynomial else "exponential beta", verdict))
        if polynomial == config.polynomial_certificate:
            own = verdict
    console.print(f"💡 {preset}: {config.cost.family.value} cost, b2={config.cost.b2}, "
                  f"a2={config.cost.a2}", style="bold blue")
    print_verdicts(rows)
    if not own.passed:
        console.print("❌ The preset's own certificate fails", style="bold red")
        return EXIT_CERTIFICATE
    return EXIT_OK


@cli.command()
@click.option('--presets', 'names', default=','.join(SWEEP_PRESETS), show_default=True,
              help='Comma-separated presets to compare on the same seed')
@_size_options
def sweep(names, instances, horizon, seed, estimators, restarts, workers, output_dir, allow_uncertified):
    """📊 Run several presets on one seed and write comparison.csv"""
    selected = [name.strip() for name in names.split(',') if name.strip()]
    for name in selected:
        get_preset(name)
    base = RunConfig.from_preset(
        selected[0],
        instances=instances,
        horizon=horizon,
        seed=seed,
        estimators=estimators,
        solver=_solver_options(restarts),
        workers=workers,
        output_dir=output_dir,
        allow_uncertified=allow_uncertified,
    )
    table = run_sweep(base, selected, instances=instances, horizon=horizon)

    out = Table(title="Preset comparison")
    for column in ("preset", "estimator", "pooled_std", "pooled_mean_abs", "failed_instances"):
        out.add_column(column, justify="right" if column.startswith(("pooled", "failed")) else "left")
    for row in table.itertuples(index=False):
        out.add_row(row.preset, row.estimator, f"{row.pooled_std:.4f}", f"{row.pooled_mean_abs:.4f}",
                    str(row.failed_instances))
    console.print(out)
    console.print(f"📁 Comparison written to {Path(output_dir) / 'comparison.csv'}")
    return EXIT_OK


@cli.command()
def presets():
    """📋 List the named experiments"""
    table = Table(title="Presets")
    table.add_column("Name", style="cyan", no_wrap=True)
    table.add_column("Mode", style="green")
    table.add_column("Description", style="white")
    for preset in PRESETS.values():
        table.add_row(preset.name, preset.mode.value, preset.description)
    console.print(table)
    return EXIT_OK


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map failures to exit codes"""
    try:
        code = cli.main(args=argv, prog_name='fie-bench', standalone_mode=False)
    except click.exceptions.Abort:
        console.print("Aborted", style="red")
        return 1
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE if isinstance(e, click.UsageError) else e.exit_code
    except CertificateError as e:
        console.print(f"❌ Certificate check failed: {e}", style="bold red")
        if e.verdict is not None:
            print_verdicts([("margin report", e.verdict)])
        return EXIT_CERTIFICATE
    except (ValidationError, DomainError) as e:
        console.print(f"❌ Invalid configuration: {e}", style="red")
        return EXIT_USAGE
    except FieBenchError as e:
        console.print(f"❌ Error: {e}", style="red")
        return 1
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(cli_main())
