"""Reference dense solver: primal log-barrier path following on the embedded real program.

Each outer step centers on t * f(x) - sum_j log det F_j(x) - sum_i log(h - Gx)_i
under A x = b with damped Newton steps, then multiplies t by the barrier
growth factor. Multipliers come from the central path:

    Z_j = F_j(x)^-1 / t,   lambda_i = 1 / (t * slack_i),   nu = w / t

where w is the equality multiplier of the last Newton system, so the
duality gap is (sum_j dim F_j + m) / t.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from src.config import BARRIER_GROWTH, FRACTION_TO_BOUNDARY, SDP_MAX_ITER, SDP_TOL
from src.solvers.base import ConicSolution, ConicSolver, SolveStatus
from src.solvers.problem import (
    ConicProblem,
    RealConicProgram,
    RealLmi,
    embed_real,
    extract_hermitian,
)

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10  # half squared Newton decrement
ARMIJO = 0.01
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
PHASE_ONE_PROXIMAL = 1e-6


@dataclass
class _PathPoint:
    x: np.ndarray
    t: float
    w: np.ndarray
    status: SolveStatus
    iterations: int


class _Barrier:
    """Barrier value, gradient and Hessian of the conic constraints at a point."""

    def __init__(self, blocks: List[RealLmi], g: np.ndarray, h: np.ndarray, n: int) -> None:
        self.blocks = blocks
        self.g = g
        self.h = h
        self.n = n
        self.degree = sum(block.size for block in blocks) + h.size

    def value(self, x: np.ndarray) -> float:
        """Barrier value, +inf outside the interior."""
        total = 0.0
        for block in self.blocks:
            try:
                factor = scipy.linalg.cholesky(block.evaluate(x), lower=True)
            except np.linalg.LinAlgError:
                return math.inf
            total -= 2.0 * float(np.sum(np.log(np.diag(factor))))
        if self.h.size:
            slack = self.h - self.g @ x
            if np.any(slack <= 0.0):
                return math.inf
            total -= float(np.sum(np.log(slack)))
        return total

    def derivatives(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad = np.zeros(self.n)
        hess = np.zeros((self.n, self.n))
        for block in self.blocks:
            if not block.idx.size:
                continue
            factor = scipy.linalg.cholesky(block.evaluate(x), lower=True)
            linv = scipy.linalg.solve_triangular(factor, np.eye(block.size), lower=True)
            scaled = np.matmul(np.matmul(linv, block.fi), linv.T)
            flat = scaled.reshape(block.idx.size, -1)
            np.add.at(grad, block.idx, -np.trace(scaled, axis1=1, axis2=2))
            hess[np.ix_(block.idx, block.idx)] += flat @ flat.T
        if self.h.size:
            inv_slack = 1.0 / (self.h - self.g @ x)
            grad += self.g.T @ inv_slack
            hess += (self.g.T * inv_slack**2) @ self.g
        return grad, hess

    def max_step(self, x: np.ndarray, dx: np.ndarray) -> float:
        """Largest alpha keeping x + alpha * dx strictly interior."""
        alpha = math.inf
        for block in self.blocks:
            if not block.idx.size:
                continue
            factor = scipy.linalg.cholesky(block.evaluate(x), lower=True)
            linv = scipy.linalg.solve_triangular(factor, np.eye(block.size), lower=True)
            move = linv @ block.direction(dx) @ linv.T
            lowest = float(scipy.linalg.eigvalsh(0.5 * (move + move.T))[0])
            if lowest < 0.0:
                alpha = min(alpha, -1.0 / lowest)
        if self.h.size:
            rate = self.g @ dx
            slack = self.h - self.g @ x
            growing = rate > 0.0
            if np.any(growing):
                alpha = min(alpha, float(np.min(slack[growing] / rate[growing])))
        return alpha

    def strictly_feasible(self, x: np.ndarray) -> bool:
        return math.isfinite(self.value(x))

    def violation(self, x: np.ndarray) -> float:
        """Smallest s >= 0 with F_j(x) + sI >= 0 and Gx - h <= s."""
        worst = 0.0
        for block in self.blocks:
            worst = max(worst, -float(scipy.linalg.eigvalsh(block.evaluate(x))[0]))
        if self.h.size:
            worst = max(worst, float(np.max(self.g @ x - self.h)))
        return worst


def _solve_kkt(
    hess: np.ndarray, a: np.ndarray, rhs_x: np.ndarray, rhs_eq: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve [[H, A^T], [A, 0]] [dx; w] = [rhs_x; rhs_eq]."""
    n, p = hess.shape[0], a.shape[0]
    kkt = np.zeros((n + p, n + p))
    kkt[:n, :n] = hess
    kkt[:n, n:] = a.T
    kkt[n:, :n] = a
    rhs = np.concatenate([rhs_x, rhs_eq])
    try:
        sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError("non-finite KKT solution")
    except (np.linalg.LinAlgError, ValueError):
        sol = scipy.linalg.lstsq(kkt, rhs)[0]
    return sol[:n], sol[n:]


class InteriorPointSolver(ConicSolver):
    """Dense primal barrier method with Phase-I slack inflation."""

    def __init__(
        self,
        barrier_growth: float = BARRIER_GROWTH,
        fraction_to_boundary: float = FRACTION_TO_BOUNDARY,
    ) -> None:
        self.barrier_growth = barrier_growth
        self.fraction_to_boundary = fraction_to_boundary

    def get_name(self) -> str:
        return "interior-point"

    def solve(
        self,
        problem: ConicProblem,
        tol: float = SDP_TOL,
        max_iter: int = SDP_MAX_ITER,
        start: Optional[Dict[str, np.ndarray]] = None,
    ) -> ConicSolution:
        program = embed_real(problem)
        x0 = problem.pack(start) if start else np.zeros(program.n)
        return self.solve_program(program, tol=tol, max_iter=max_iter, x0=x0)

    def solve_program(
        self,
        program: RealConicProgram,
        tol: float = SDP_TOL,
        max_iter: int = SDP_MAX_ITER,
        x0: Optional[np.ndarray] = None,
    ) -> ConicSolution:
        """Solve an embedded real program (used directly by the dump tool)."""
        n = program.n
        scale = _objective_scale(program)
        p, q = program.p / scale, program.q / scale
        barrier = _Barrier(program.blocks, program.g, program.h, n)

        x = _project(program.a, program.b, np.zeros(n) if x0 is None else np.asarray(x0, float))
        if program.b.size and np.max(np.abs(program.a @ x - program.b)) > 1e-9 * max(
            1.0, float(np.max(np.abs(program.b)))
        ):
            logger.debug("equality constraints are inconsistent")
            return self._finish(program, x, None, scale, SolveStatus.INFEASIBLE, 0)

        if barrier.degree == 0:
            dx, w = _solve_kkt(p, program.a, -(p @ x + q), program.b - program.a @ x)
            point = _PathPoint(x + dx, 1.0, w, SolveStatus.OPTIMAL, 1)
            return self._finish(program, x + dx, point, scale, SolveStatus.OPTIMAL, 1)

        used = 0
        if not barrier.strictly_feasible(x):
            x, used = self._phase_one(program, barrier, x, tol, max_iter)
            if x is None:
                return self._finish(program, np.zeros(n), None, scale, SolveStatus.INFEASIBLE, used)

        point = self._path_follow(p, q, program.a, program.b, barrier, x, tol, max_iter - used)
        point.iterations += used
        return self._finish(program, point.x, point, scale, point.status, point.iterations)

    def _phase_one(
        self,
        program: RealConicProgram,
        barrier: _Barrier,
        x0: np.ndarray,
        tol: float,
        max_iter: int,
    ) -> Tuple[Optional[np.ndarray], int]:
        """Minimise s subject to F_j(x) + sI >= 0, Gx - s <= h, s >= -1; stop once s < 0."""
        n = program.n
        blocks = [
            RealLmi(
                idx=np.append(block.idx, n),
                f0=block.f0,
                fi=np.concatenate([block.fi, np.eye(block.size)[np.newaxis]], axis=0),
                name=block.name,
            )
            for block in program.blocks
        ]
        g = np.vstack(
            [
                np.hstack([program.g, -np.ones((program.h.size, 1))]),
                np.append(np.zeros(n), -1.0)[np.newaxis, :],
            ]
        )
        h = np.append(program.h, 1.0)
        a = np.hstack([program.a, np.zeros((program.b.size, 1))])
        p = np.zeros((n + 1, n + 1))
        p[:n, :n] = PHASE_ONE_PROXIMAL * np.eye(n)
        q = np.append(-PHASE_ONE_PROXIMAL * x0, 1.0)
        aux = _Barrier(blocks, g, h, n + 1)
        start = np.append(x0, barrier.violation(x0) + 1.0)

        point = self._path_follow(
            p, q, a, program.b, aux, start, tol, max_iter, stop=lambda z: z[n] < 0.0
        )
        if point.x[n] < 0.0 and barrier.strictly_feasible(point.x[:n]):
            logger.debug("phase I found an interior point after %d steps", point.iterations)
            return point.x[:n], point.iterations
        logger.debug("phase I ended with s = %.3e: no strictly feasible point", point.x[n])
        return None, point.iterations

    def _path_follow(
        self,
        p: np.ndarray,
        q: np.ndarray,
        a: np.ndarray,
        b: np.ndarray,
        barrier: _Barrier,
        x: np.ndarray,
        tol: float,
        max_iter: int,
        stop: Optional[Callable[[np.ndarray], bool]] = None,
    ) -> _PathPoint:
        t = 1.0
        iterations = 0
        w = np.zeros(b.size)

        def merit(z: np.ndarray, t_now: float) -> float:
            value = barrier.value(z)
            if not math.isfinite(value):
                return math.inf
            return t_now * float(0.5 * z @ p @ z + q @ z) + value

        while True:
            while True:
                grad_b, hess_b = barrier.derivatives(x)
                grad = t * (p @ x + q) + grad_b
                hess = t * p + hess_b
                dx, w = _solve_kkt(hess, a, -grad, b - a @ x)
                decrement = float(dx @ hess @ dx)
                if 0.5 * decrement <= NEWTON_TOL:
                    break
                if iterations >= max_iter:
                    logger.warning("barrier method hit %d Newton steps", max_iter)
                    return _PathPoint(x, t, w, SolveStatus.MAX_ITER, iterations)
                alpha = min(1.0, self.fraction_to_boundary * barrier.max_step(x, dx))
                current = merit(x, t)
                slope = float(grad @ dx)
                for _ in range(MAX_BACKTRACKS):
                    if merit(x + alpha * dx, t) <= current + ARMIJO * alpha * min(slope, 0.0):
                        break
                    alpha *= BACKTRACK
                else:
                    iterations += 1
                    break
                x = x + alpha * dx
                iterations += 1
                if stop is not None and stop(x):
                    return _PathPoint(x, t, w, SolveStatus.OPTIMAL, iterations)
            gap = barrier.degree / t
            objective = float(0.5 * x @ p @ x + q @ x)
            logger.debug("barrier t=%.3e gap=%.3e objective=%.6e", t, gap, objective)
            if gap <= tol * max(1.0, abs(objective)):
                return _PathPoint(x, t, w, SolveStatus.OPTIMAL, iterations)
            t *= self.barrier_growth

    def _finish(
        self,
        program: RealConicProgram,
        x: np.ndarray,
        point: Optional[_PathPoint],
        scale: float,
        status: SolveStatus,
        iterations: int,
    ) -> ConicSolution:
        values = program.unpack(x)
        objective = program.objective(x)
        if point is None:
            return ConicSolution(
                x=x, values=values, status=status, objective=objective, iterations=iterations
            )
        t = point.t
        nu = scale * point.w / t
        lam = np.zeros(program.h.size)
        if program.h.size:
            lam = scale / (t * (program.h - program.g @ x))
        real_duals = [
            scale * np.linalg.inv(block.evaluate(x)) / t for block in program.blocks
        ]
        psd_duals = [2.0 * extract_hermitian(z) for z in real_duals]

        dual_objective = (
            program.c
            - 0.5 * float(x @ program.p @ x)
            - float(nu @ program.b)
            - float(lam @ program.h)
            - sum(float(np.sum(z * block.f0)) for z, block in zip(real_duals, program.blocks))
        )
        gradient = program.p @ x + program.q + program.a.T @ nu + program.g.T @ lam
        for z, block in zip(real_duals, program.blocks):
            if block.idx.size:
                np.subtract.at(gradient, block.idx, np.einsum("ab,iab->i", z, block.fi))
        primal_res = float(np.max(np.abs(program.a @ x - program.b))) if program.b.size else 0.0
        b_scale = max(1.0, float(np.max(np.abs(program.b)))) if program.b.size else 1.0
        residuals = {
            "primal": primal_res / b_scale,
            "dual": float(np.max(np.abs(gradient))) / scale if gradient.size else 0.0,
            "gap": max(0.0, objective - dual_objective) / max(1.0, abs(objective)),
        }
        logger.debug(
            "conic solve %s in %d steps: objective=%.6e residuals=%s",
            status.value,
            iterations,
            objective,
            residuals,
        )
        return ConicSolution(
            x=x,
            values=values,
            status=status,
            objective=objective,
            dual_objective=dual_objective,
            eq_dual=nu,
            ineq_dual=lam,
            psd_duals=psd_duals,
            kkt_residuals=residuals,
            iterations=iterations,
        )


def _objective_scale(program: RealConicProgram) -> float:
    largest = max(
        float(np.max(np.abs(program.p))) if program.p.size else 0.0,
        float(np.max(np.abs(program.q))) if program.q.size else 0.0,
    )
    return largest if largest > 0.0 else 1.0


def _project(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Closest point to x on {A x = b} (least squares)."""
    if not b.size:
        return x
    correction = scipy.linalg.lstsq(a, b - a @ x)[0]
    return x + correction
