"""Command-line entry point of the STAR-RIS MIMO simulator.

Usage:
    star-ris-sim run --config configs/default.toml
    star-ris-sim compare --config configs/default.toml --jobs 4 --verify
    star-ris-sim validate-config --config configs/default.toml
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src.driver import SCHEME_LABELS
from src.errors import ConfigError, StarRisError
from src.experiment import (
    ExperimentConfig,
    ResultRow,
    load_config,
    run_experiment,
    summarize,
    validate_config,
    verify_rows,
    write_csv,
)

console = Console()
logger = logging.getLogger("src")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="star-ris-sim",
        description="Joint precoding and STAR-RIS coefficient optimisation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--config",
            type=Path,
            default=Path("configs/default.toml"),
            help="Experiment TOML file (default: configs/default.toml)",
        )
        p.add_argument(
            "--verbose",
            action="store_true",
            help="Log per-iteration progress at DEBUG level",
        )

    for name, text in (
        ("run", "Run the configured schemes over the sweep and trials"),
        ("compare", "Run ES, MS, TS and the reflecting-only baseline on identical channel draws"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        common(p)
        p.add_argument(
            "--out",
            type=Path,
            default=None,
            help="CSV output path (default: experiment.output from the config)",
        )
        p.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="Worker processes for parallel trials (default: 1)",
        )
        p.add_argument(
            "--verify",
            action="store_true",
            help="Recompute the WSR of 10 random rows from their recorded solutions",
        )
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Override experiment.base_seed",
        )
        p.add_argument(
            "--timing",
            action="store_true",
            help="Write measured wall time to the CSV (default: 0, keeps output byte-stable)",
        )

    p = sub.add_parser("validate-config", help="Check a config file without running solves")
    common(p)
    return parser


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
        force=True,
    )


def show_header(config: ExperimentConfig, command: str) -> None:
    exp = config.experiment
    sweep = "none" if exp.sweep == "none" else f"{exp.sweep} over {list(exp.values)}"
    console.print(
        Panel.fit(
            f"[bold cyan]STAR-RIS MIMO {command}[/bold cyan]\n"
            f"[dim]{config.source}[/dim]\n"
            f"schemes: {', '.join(exp.protocols)}   traffic: {config.system.traffic}\n"
            f"sweep: {sweep}   trials: {exp.trials}   base seed: {exp.base_seed}",
            border_style="cyan",
        )
    )


def show_summary(rows: Sequence[ResultRow], config: ExperimentConfig, wall_s: float) -> None:
    table = Table(title="Ensemble weighted sum rate (bits/s/Hz)", box=box.ROUNDED)
    table.add_column(config.experiment.sweep, style="cyan", justify="right")
    table.add_column("Scheme", style="green")
    table.add_column("Mean WSR", justify="right")
    table.add_column("Std", justify="right")
    table.add_column("Trials", justify="right")
    table.add_column("Warnings", justify="right")
    for entry in summarize(rows, config.experiment.protocols):
        table.add_row(
            "-" if entry.sweep_value is None else f"{entry.sweep_value:g}",
            entry.protocol,
            f"{entry.mean_wsr:.4f}",
            f"{entry.std_wsr:.4f}",
            str(entry.trials),
            str(entry.warnings) if entry.warnings == 0 else f"[yellow]{entry.warnings}[/yellow]",
        )
    console.print(table)
    console.print(f"[dim]{len(rows)} rows in {wall_s:.1f} s[/dim]")


def cmd_validate(args: argparse.Namespace) -> int:
    violations = validate_config(args.config)
    if not violations:
        console.print(f"[green]✓[/green] {args.config} is valid")
        return EXIT_OK
    table = Table(title=f"{len(violations)} violation(s) in {args.config}", box=box.ROUNDED)
    table.add_column("Field", style="red")
    table.add_column("Problem")
    for v in violations:
        table.add_row(v.name, v.detail)
    console.print(table)
    return EXIT_CONFIG


def cmd_run(args: argparse.Namespace, compare: bool) -> int:
    config = load_config(args.config)
    config = config.with_overrides(
        base_seed=args.seed, protocols=SCHEME_LABELS if compare else None
    )
    out = args.out or Path(config.experiment.output)
    show_header(config, "compare" if compare else "run")

    total = len(config.sweep_values()) * config.experiment.trials
    start = time.perf_counter()
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("Trials", total=total)
        rows = run_experiment(
            config, jobs=args.jobs, progress=lambda n: progress.advance(task, n)
        )
    wall_s = time.perf_counter() - start

    write_csv(rows, out, timing=args.timing)
    console.print(f"[green]✓[/green] wrote {len(rows)} rows to [cyan]{out}[/cyan]")
    show_summary(rows, config, wall_s)
    if args.verify:
        checked = verify_rows(config, rows)
        console.print(f"[green]✓[/green] verified {checked} rows against model.wsr")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    if getattr(args, "jobs", 1) < 1:
        console.print("[red]--jobs must be >= 1[/red]")
        return EXIT_CONFIG
    try:
        if args.command == "validate-config":
            return cmd_validate(args)
        return cmd_run(args, compare=args.command == "compare")
    except ConfigError as exc:
        console.print(f"[red]Config error:[/red] {exc}")
        return EXIT_CONFIG
    except StarRisError as exc:
        console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
        return EXIT_SOLVER
    except OSError as exc:
        console.print(f"[red]I/O error:[/red] {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
