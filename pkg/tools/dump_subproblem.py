#!/usr/bin/env python3
"""
Dump the first energy-splitting convex subproblem of a configured trial.

Usage:
    python tools/dump_subproblem.py
    python tools/dump_subproblem.py --config configs/default.toml --seed 3 --out sub.txt
    python tools/dump_subproblem.py --out sub.txt --solve

The dump is the real-embedded conic program in the plain-text format read
back by src.solvers.problem.load_program, so a failing subproblem can be
replayed against the interior-point solver without redrawing channels.
"""

import argparse
import sys
from pathlib import Path

from rich.console import Console

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.algorithms import EnergySplittingAlgorithm
from src.errors import StarRisError
from src.experiment import build_channels, load_config
from src.solvers import InteriorPointSolver
from src.solvers.problem import dump_program, embed_real, load_program
from src.tarc import assemble_tarc, es_subproblem
from src.wmmse import update_state

console = Console()


def dump_subproblem(config_path: Path, seed: int, out: Path) -> None:
    """Write the subproblem of trial `seed` at the first sweep point to `out`."""
    config = load_config(config_path)
    spec = config.spec_for(config.sweep_values()[0])
    channels = build_channels(config, spec, seed)

    star, precoders = EnergySplittingAlgorithm().initial_point(spec, channels)
    state = update_state(spec, channels, precoders, star)
    quadratic = assemble_tarc(spec, channels, precoders, state, star.protocol)
    program = embed_real(es_subproblem(quadratic, star))

    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as stream:
        dump_program(program, stream, title=f"{config.source} seed={seed} M={spec.m_elements}")
    console.print(
        f"[green]✓[/green] {program.n} variables, {len(program.blocks)} LMI blocks "
        f"-> [cyan]{out}[/cyan]"
    )


def solve_dump(path: Path) -> None:
    with path.open(encoding="utf-8") as stream:
        program = load_program(stream)
    solution = InteriorPointSolver().solve_program(program)
    console.print(
        f"status: [bold]{solution.status.value}[/bold]  iterations: {solution.iterations}"
    )
    console.print(f"objective: {solution.objective:.10g}")
    for key, value in sorted(solution.kkt_residuals.items()):
        console.print(f"  {key}: {value:.3e}")


def main() -> int:
    parser = argparse.ArgumentParser(description="Dump an ES convex subproblem for replay")
    parser.add_argument(
        "--config",
        type=Path,
        default=Path("configs/default.toml"),
        help="Experiment TOML file (default: configs/default.toml)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Channel seed (default: experiment.base_seed)",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=Path("results/subproblem.txt"),
        help="Output path (default: results/subproblem.txt)",
    )
    parser.add_argument(
        "--solve",
        action="store_true",
        help="Reload the dump and solve it with the interior-point solver",
    )
    args = parser.parse_args()

    try:
        seed = args.seed
        if seed is None:
            seed = load_config(args.config).experiment.base_seed
        dump_subproblem(args.config, seed, args.out)
        if args.solve:
            solve_dump(args.out)
    except StarRisError as exc:
        console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
