"""Optional cross-check backend: hands the embedded real program to cvxpy.

Install with the ``crosscheck`` extra. Solutions carry multipliers in the
same convention as the reference solver so certify() applies unchanged.
"""

import logging
from typing import Dict, Optional

import numpy as np

from src.config import SDP_MAX_ITER, SDP_TOL
from src.errors import SolverError
from src.solvers.base import ConicSolution, ConicSolver, SolveStatus
from src.solvers.problem import ConicProblem, embed_real, extract_hermitian

logger = logging.getLogger(__name__)


class CvxpySolver(ConicSolver):
    """Solve conic subproblems with cvxpy (SCS or CLARABEL by default)."""

    def __init__(self, solver: Optional[str] = None) -> None:
        try:
            import cvxpy  # noqa: F401
        except ImportError as exc:  # pragma: no cover - depends on the environment
            raise SolverError("cvxpy is not installed", status="unavailable") from exc
        self.solver = solver

    def get_name(self) -> str:
        return f"cvxpy[{self.solver or 'default'}]"

    def solve(
        self,
        problem: ConicProblem,
        tol: float = SDP_TOL,
        max_iter: int = SDP_MAX_ITER,
        start: Optional[Dict[str, np.ndarray]] = None,
    ) -> ConicSolution:
        import cvxpy as cp

        program = embed_real(problem)
        x = cp.Variable(program.n)
        objective = 0.5 * cp.quad_form(x, cp.psd_wrap(program.p)) + program.q @ x + program.c
        constraints = []
        eq = ineq = None
        if program.b.size:
            eq = program.a @ x == program.b
            constraints.append(eq)
        if program.h.size:
            ineq = program.g @ x <= program.h
            constraints.append(ineq)
        lmis = []
        for block in program.blocks:
            k = block.size
            affine = block.f0
            if block.idx.size:
                flat = block.fi.reshape(block.idx.size, k * k).T
                affine = block.f0 + cp.reshape(flat @ x[block.idx], (k, k), order="C")
            lmi = 0.5 * (affine + affine.T) >> 0
            lmis.append(lmi)
            constraints.append(lmi)

        cvx_problem = cp.Problem(cp.Minimize(objective), constraints)
        try:
            cvx_problem.solve(solver=self.solver)
        except cp.error.SolverError as exc:
            raise SolverError(str(exc), status="solver_failure") from exc

        status = cvx_problem.status
        logger.debug("cvxpy finished with status %s", status)
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return ConicSolution(
                x=np.zeros(program.n),
                values=program.unpack(np.zeros(program.n)),
                status=SolveStatus.INFEASIBLE,
            )
        if x.value is None:
            raise SolverError(f"cvxpy returned no point (status {status})", status=str(status))

        xv = np.asarray(x.value, dtype=float)
        psd_duals = [
            2.0 * extract_hermitian(np.asarray(lmi.dual_value, dtype=float)) for lmi in lmis
        ]
        return ConicSolution(
            x=xv,
            values=program.unpack(xv),
            status=SolveStatus.OPTIMAL if status == cp.OPTIMAL else SolveStatus.MAX_ITER,
            objective=program.objective(xv),
            dual_objective=float("nan"),
            eq_dual=np.asarray(eq.dual_value, dtype=float) if eq is not None else np.zeros(0),
            ineq_dual=np.asarray(ineq.dual_value, dtype=float) if ineq is not None else np.zeros(0),
            psd_duals=psd_duals,
        )
