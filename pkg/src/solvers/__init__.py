"""Conic subproblem solvers for the TARC updates."""

from src.errors import DomainError
from src.solvers.base import Certificate, ConicSolution, ConicSolver, SolveStatus, certify
from src.solvers.interior_point import InteriorPointSolver
from src.solvers.problem import (
    ConicProblem,
    LinearForm,
    RealConicProgram,
    Variable,
    VariableKind,
    dump_program,
    embed_hermitian,
    embed_real,
    extract,
    extract_hermitian,
    load_program,
)

SOLVERS = {
    "interior-point": InteriorPointSolver,
}


def is_known_solver(name: str) -> bool:
    """True for a registered solver name or a 'cvxpy[:SOLVER]' backend name."""
    return isinstance(name, str) and (name in SOLVERS or name.split(":", 1)[0] == "cvxpy")


def get_solver(name: str = "interior-point") -> ConicSolver:
    """Instantiate a conic solver by name ('interior-point' or 'cvxpy[:SOLVER]').

    Raises:
        DomainError: if the name is neither registered nor a cvxpy backend
    """
    if not is_known_solver(name):
        raise DomainError(f"unknown conic solver {name!r}; available: {sorted(SOLVERS)} or cvxpy")
    if name in SOLVERS:
        return SOLVERS[name]()
    from src.solvers.cvxpy_solver import CvxpySolver

    _, _, backend = name.partition(":")
    return CvxpySolver(solver=backend or None)


__all__ = [
    "Certificate",
    "ConicProblem",
    "ConicSolution",
    "ConicSolver",
    "InteriorPointSolver",
    "LinearForm",
    "RealConicProgram",
    "SolveStatus",
    "Variable",
    "VariableKind",
    "certify",
    "dump_program",
    "embed_hermitian",
    "embed_real",
    "extract",
    "extract_hermitian",
    "get_solver",
    "is_known_solver",
    "load_program",
]
