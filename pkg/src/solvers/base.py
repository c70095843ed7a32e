"""Solver interface, solution container and the independent KKT certificate."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from src.config import SDP_MAX_ITER, SDP_TOL
from src.linalg import min_eigenvalue
from src.solvers.problem import ConicProblem


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class ConicSolution:
    """Primal point, multipliers and residuals of one conic solve.

    psd_duals holds one complex Hermitian Z_j per LMI block, entering the
    Lagrangian as -Re Tr(Z_j F_j(x)).
    """

    x: np.ndarray
    values: Dict[str, np.ndarray]
    status: SolveStatus
    objective: float = float("nan")
    dual_objective: float = float("nan")
    eq_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    psd_duals: List[np.ndarray] = field(default_factory=list)
    kkt_residuals: Dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass(frozen=True)
class Certificate:
    """Residuals recomputed from scratch for a candidate solution."""

    equality: float
    inequality: float
    psd_min_eigenvalue: float
    stationarity: float
    complementarity: float
    dual_infeasibility: float
    scale: float

    def passes(self, tol: float) -> bool:
        """True when every scaled residual is within tol."""
        return (
            self.equality <= tol * self.scale
            and self.inequality <= tol * self.scale
            and self.psd_min_eigenvalue >= -tol * self.scale
            and self.stationarity <= tol * self.scale
            and self.complementarity <= tol * self.scale
            and self.dual_infeasibility <= tol * self.scale
        )


def certify(solution: ConicSolution, problem: ConicProblem) -> Certificate:
    """Recompute primal feasibility, stationarity and complementary slackness residuals."""
    x = np.asarray(solution.x, dtype=float)
    p, q, a, b, g, h = problem.matrices()
    nu = solution.eq_dual if solution.eq_dual.size == b.size else np.zeros(b.size)
    lam = solution.ineq_dual if solution.ineq_dual.size == h.size else np.zeros(h.size)

    equality = float(np.max(np.abs(a @ x - b))) if b.size else 0.0
    inequality = float(max(0.0, np.max(g @ x - h))) if h.size else 0.0

    gradient = p @ x + q + a.T @ nu + g.T @ lam
    psd_min = float("inf")
    complementarity = abs(float(lam @ (h - g @ x))) if h.size else 0.0
    dual_infeasibility = float(max(0.0, -np.min(lam))) if lam.size else 0.0
    for j, block in enumerate(problem.lmis):
        value = block.evaluate(x)
        psd_min = min(psd_min, min_eigenvalue(value))
        if j >= len(solution.psd_duals):
            continue
        z = solution.psd_duals[j]
        idx, mats = block.coefficients()
        if idx.size:
            # d/dx_i Re Tr(Z F(x)) = Re Tr(Z F_i)
            contrib = np.real(np.einsum("ab,iba->i", z, mats))
            np.subtract.at(gradient, idx, contrib)
        complementarity += abs(float(np.real(np.trace(z @ value))))
        dual_infeasibility = max(dual_infeasibility, -min_eigenvalue(z))
    if not problem.lmis:
        psd_min = 0.0

    p_max = float(np.max(np.abs(p))) if p.size else 0.0
    q_max = float(np.max(np.abs(q))) if q.size else 0.0
    scale = max(1.0, p_max, q_max)
    return Certificate(
        equality=equality,
        inequality=inequality,
        psd_min_eigenvalue=psd_min,
        stationarity=float(np.max(np.abs(gradient))) if gradient.size else 0.0,
        complementarity=complementarity,
        dual_infeasibility=dual_infeasibility,
        scale=scale,
    )


class ConicSolver(ABC):
    """
    Base class for conic subproblem solvers.

    A solver takes a ConicProblem and returns a ConicSolution whose
    multipliers follow the conventions of certify(), so any backend can be
    checked by the same residual report.
    """

    @abstractmethod
    def solve(
        self,
        problem: ConicProblem,
        tol: float = SDP_TOL,
        max_iter: int = SDP_MAX_ITER,
        start: Optional[Dict[str, np.ndarray]] = None,
    ) -> ConicSolution:
        """
        Solve a conic problem.

        Args:
            problem: Problem to solve
            tol: Relative duality-gap and feasibility tolerance
            max_iter: Iteration cap
            start: Optional starting values by variable name

        Returns:
            ConicSolution with status optimal, infeasible or max_iter
        """

    def get_name(self) -> str:
        return self.__class__.__name__

    def get_description(self) -> str:
        return self.__doc__.strip().split("\n")[0] if self.__doc__ else ""
