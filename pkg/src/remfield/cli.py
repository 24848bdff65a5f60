"""CLI interface for remfield."""

import functools
import json
import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from remfield import harness
from remfield.config import ExperimentConfig, apply_overrides, load_config, parse_list, parse_model
from remfield.errors import ConfigError, RemFieldError
from remfield.recentering import c1_from_rate

console = Console()
err_console = Console(stderr=True)

EXIT_CONFIG = 1
EXIT_FAIL = 2


def setup_logging(verbose: bool) -> None:
    """Route library logging and warnings to a rich handler on stderr."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )
    logging.captureWarnings(True)


def experiment_options(fn):
    """Flags shared by every subcommand; each mirrors a config key."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment config (JSON or YAML)")
    @click.option("--model", help='Field law, e.g. "rademacher:p=0.5,a=1" or a JSON record')
    @click.option("--n", "n", type=int, help="Number of spins")
    @click.option("--replicas", type=int, help="Number of disorder replicas")
    @click.option("--seed", "master_seed", type=int, help="Master seed")
    @click.option("--betas", help='Comma-separated inverse temperatures, e.g. "0.5,bc,2bc"')
    @click.option("--workers", type=int, help="Parallel workers")
    @click.option("--out", "output_dir", type=click.Path(file_okay=False), help="Output directory")
    @functools.wraps(fn)
    def wrapper(config_path, model, n, replicas, master_seed, betas, workers, output_dir, **kwargs):
        try:
            config = load_config(config_path)
            config = apply_overrides(
                config,
                model=parse_model(model) if model else None,
                n=n,
                replicas=replicas,
                master_seed=master_seed,
                betas=parse_list(betas) if betas else None,
                workers=workers,
                output_dir=output_dir,
            )
            experiment = ExperimentConfig.from_dict(config)
        except ConfigError as e:
            console.print(f"[red]Error:[/red] {escape(str(e))}")
            sys.exit(EXIT_CONFIG)
        try:
            return fn(experiment, **kwargs)
        except RemFieldError as e:
            console.print(f"[red]Error:[/red] {escape(str(e))}")
            sys.exit(EXIT_CONFIG)

    return wrapper


@click.group()
@click.version_option()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr")
def main(verbose: bool):
    """remfield - Random Energy Model in a random field: thermodynamics and extremal statistics."""
    setup_logging(verbose)


@main.command()
@experiment_options
@click.option("--json-output", "--json", "json_output", is_flag=True, help="Print the solution as JSON")
def thermo(experiment: ExperimentConfig, json_output: bool):
    """Solve the asymptotic thermodynamics of the field law."""
    solution = harness.cmd_thermo(experiment)
    if json_output:
        click.echo(json.dumps(solution.to_dict(), indent=2))
        return

    table = Table(title=f"Thermodynamics: {experiment.model.label}")
    table.add_column("Constant", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("beta_c", f"{solution.beta_c:.12f}")
    table.add_row("E_max", f"{solution.e_max:.12f}")
    table.add_row("E_min", f"{solution.e_min:.12f}")
    table.add_row("q", f"{solution.q:.12f}")
    table.add_row("C", f"{solution.c_intensity:.12f}")
    table.add_row("y*(E_max)", f"{solution.y_star:.12f}")
    table.add_row("t*(E_max)", f"{solution.t_star:.12f}")
    console.print(table)
    console.print(f"[dim]Written to {experiment.output_dir}[/dim]")


@main.command()
@experiment_options
@click.option("--replica", default=0, help="Replica whose field is sampled (default: 0)")
@click.option("--json-output", "--json", "json_output", is_flag=True, help="Print the constants as JSON")
def recenter(experiment: ExperimentConfig, replica: int, json_output: bool):
    """Finite-N recentering constants of one sampled field."""
    constants, solution = harness.cmd_recenter(experiment, replica)
    if json_output:
        click.echo(json.dumps(constants.to_dict(), indent=2))
        return

    table = Table(title=f"Recentering: {experiment.model.label}, N={constants.n}, replica {replica}")
    table.add_column("Constant", style="cyan")
    table.add_column("Value", justify="right")
    table.add_column("Limit", justify="right", style="dim")
    table.add_row("t*_N", f"{constants.t_star:.10f}", f"{solution.beta_c:.10f}")
    table.add_row("y*_N", f"{constants.y_star:.10f}", f"{solution.y_star:.10f}")
    table.add_row("c1", f"{constants.c1:.10f}", f"{solution.e_max:.10f}")
    table.add_row("c1 (rate form)", f"{c1_from_rate(constants):.10f}", "")
    table.add_row("c2", f"{constants.c2:.10f}", f"{0.5 / solution.beta_c:.10f}")
    table.add_row("r(N,h)", f"{constants.r:.6f}", "")
    table.add_row("q_N", f"{constants.q_n:.10f}", f"{solution.q:.10f}")
    console.print(table)


@main.command()
@experiment_options
@click.option("--n-sweep", help='Comma-separated sizes, e.g. "20,22,24"; one subdirectory per size')
def simulate(experiment: ExperimentConfig, n_sweep: str | None):
    """Enumerate all replicas and append them to records.jsonl."""
    sizes = [int(v) for v in parse_list(n_sweep)] if n_sweep else []
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=err_console,
    ) as progress:
        task = progress.add_task("Enumerating replicas...", total=experiment.replicas)
        paths = harness.cmd_simulate(
            experiment,
            n_sweep=sizes,
            progress=lambda done, total: progress.update(task, completed=done, total=total),
        )
    for path in paths:
        console.print(f"[green]✓[/green] {path}")


@main.command()
@experiment_options
@click.option("--records", "records_path", type=click.Path(dir_okay=False), help="Records file (default: OUT/records.jsonl)")
def analyze(experiment: ExperimentConfig, records_path: str | None):
    """Test the limit laws on simulated records."""
    result = harness.cmd_analyze(experiment, Path(records_path) if records_path else None)

    table = Table(title="Acceptance")
    table.add_column("Test", style="cyan")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for c in result.criteria:
        status = "[bold green]PASS[/bold green]" if c.passed else "[bold red]FAIL[/bold red]"
        table.add_row(c.name, status, escape(c.detail))
    console.print(table)

    if result.passed:
        console.print(Panel("All criteria passed", border_style="green"))
    else:
        console.print(Panel("Some criteria failed", border_style="red"))
        sys.exit(EXIT_FAIL)


@main.command()
@experiment_options
def bound(experiment: ExperimentConfig):
    """Fractional-moment upper bound against the free energy."""
    rows = harness.cmd_bound(experiment)

    table = Table(title=f"Fractional-moment bound: {experiment.model.label}")
    table.add_column("beta", justify="right", style="cyan")
    table.add_column("bound", justify="right")
    table.add_column("m*", justify="right")
    table.add_column("f(beta)", justify="right")
    table.add_column("gap", justify="right", style="dim")
    for row in rows:
        table.add_row(
            f"{row['beta']:.4f}",
            f"{row['bound']:.10f}",
            f"{row['m_star']:.6f}",
            f"{row['free_energy']:.10f}",
            f"{row['gap']:.2e}",
        )
    console.print(table)


if __name__ == "__main__":
    main()
