"""Transmitting and reflecting coefficient (TARC) updates.

For fixed precoders and WMMSE state the TARC objective is, per user,

    f_l(phi_l) = phi_l^H Z_l phi_l - 2 Re{phi_l^H conj(z_l)}

with phi_l the complex coefficient vector of side l. ES couples the two
sides through |phi_t,m|^2 + |phi_r,m|^2 = 1 and is handled by a penalty
concave-convex procedure over a rank-one LMI relaxation; MS adds a
binarity penalty on the amplitudes; TS and the reflecting-only baseline
keep unit or fixed amplitudes and update phases by majorization-minimization.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.channel import ChannelSet
from src.config import (
    BINARY_TOL,
    CCP_MAX_ITER,
    CCP_PENALTY,
    CCP_PENALTY_GROWTH,
    CCP_PENALTY_MAX,
    CCP_TOL,
    MM_MAX_ITER,
    MM_TOL,
    MONOTONE_REL_TOL,
    MS_RHO_GROWTH,
    MS_RHO_INITIAL,
    MS_RHO_MAX,
    SDP_TOL,
)
from src.errors import DomainError, SolverError
from src.linalg import hermitize, max_eigenvalue, min_eigenvalue
from src.model import PrecoderSet, ProtocolKind, StarConfig, SystemSpec
from src.solvers import ConicProblem, ConicSolver, InteriorPointSolver, SolveStatus
from src.wmmse import WmmseState

logger = logging.getLogger(__name__)

RANK_ONE_GAP_TOL = 1e-3

__all__ = [
    "CcpIterate",
    "RhoSchedule",
    "TarcQuadratic",
    "TarcResult",
    "assemble_tarc",
    "chi_update",
    "es_subproblem",
    "initial_phases",
    "max_eigenvalue",
    "solve_es",
    "solve_ms",
    "solve_ts",
    "solve_ts_mm",
]


@dataclass(frozen=True, eq=False)
class TarcQuadratic:
    """Per-user quadratic forms (Z_l, z_l) of the TARC subproblem."""

    z_mat: Tuple[np.ndarray, np.ndarray]
    z_vec: Tuple[np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        for idx, z in enumerate(self.z_mat):
            scale = max(1e-300, float(np.linalg.norm(z, 2)))
            if z.size and min_eigenvalue(z) < -1e-8 * scale:
                raise DomainError(f"TARC quadratic {idx} is not positive semidefinite")

    @property
    def m_elements(self) -> int:
        return int(self.z_vec[0].size)

    def side(self, side: str) -> Tuple[np.ndarray, np.ndarray]:
        idx = 0 if side == "t" else 1
        return self.z_mat[idx], self.z_vec[idx]

    def side_objective(self, side: str, phi: np.ndarray) -> float:
        z_mat, z_vec = self.side(side)
        return _quadratic_value(z_mat, z_vec, phi)

    def objective(self, config: StarConfig) -> float:
        """Sum of both users' objectives at a configuration's coefficient vectors."""
        return sum(self.side_objective(s, config.coefficients(s)) for s in ("t", "r"))

    def scale(self) -> float:
        """Magnitude of the problem data, used to set penalty weights."""
        return float(
            sum(np.linalg.norm(z) for z in self.z_mat) + sum(np.linalg.norm(z) for z in self.z_vec)
        )

    def frobenius(self) -> float:
        return float(sum(np.linalg.norm(z) for z in self.z_mat))

    def masked(self, side: str, amplitude: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(D Z D, D z) for fixed amplitudes D = Diag(amplitude), phases left free."""
        z_mat, z_vec = self.side(side)
        amp = np.asarray(amplitude, dtype=float)
        return hermitize(amp[:, None] * z_mat * amp[None, :]), amp * z_vec


@dataclass
class CcpIterate:
    """Values of one convex TARC subproblem solve."""

    phi: Dict[str, np.ndarray]
    omega: Dict[str, np.ndarray]
    d1: Dict[str, np.ndarray]
    d2: Dict[str, np.ndarray]
    slack: Dict[str, float]
    penalty_rho: float = 0.0
    chi: Optional[Dict[str, np.ndarray]] = None

    def rank_one_gap(self) -> float:
        """max_l ||Omega_l - phi_l phi_l^H||_F."""
        return max(
            float(np.linalg.norm(self.omega[s] - np.outer(self.phi[s], self.phi[s].conj())))
            for s in ("t", "r")
        )

    def diag_residual(self) -> float:
        total = np.real(np.diag(self.omega["t"]) + np.diag(self.omega["r"]))
        return float(np.max(np.abs(total - 1.0)))


@dataclass(frozen=True)
class RhoSchedule:
    """Binarity penalty schedule, relative to ||Z||_F."""

    initial: float = MS_RHO_INITIAL
    growth: float = MS_RHO_GROWTH
    maximum: float = MS_RHO_MAX

    def __post_init__(self) -> None:
        if not (self.initial > 0.0 and self.growth > 1.0 and self.maximum >= self.initial):
            raise DomainError(f"invalid penalty schedule {self}")


@dataclass
class TarcResult:
    """Outcome of one TARC update."""

    config: StarConfig
    objective: float
    history: List[float] = field(default_factory=list)
    rank_one_gap: float = 0.0
    iterations: int = 0
    warnings: List[str] = field(default_factory=list)


def _quadratic_value(z_mat: np.ndarray, z_vec: np.ndarray, phi: np.ndarray) -> float:
    quad = np.real(np.vdot(phi, z_mat @ phi))
    lin = np.real(np.vdot(phi, np.conj(z_vec)))
    return float(quad - 2.0 * lin)


def assemble_tarc(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    state: WmmseState,
    protocol: ProtocolKind,
) -> TarcQuadratic:
    """Build the per-user quadratic forms of the TARC objective.

        Z_l = (w_l H_l^H U_l V_l U_l^H H_l) o (F S_l F^H)^T
        z_l = diag(w_l F W_l V_l U_l^H H_l)

    S_l is the transmit covariance seen by user l: both users' precoders
    under ES/MS unicast, the user's own (or the shared) precoder under TS
    and broadcast.
    """
    f = channels.f
    z_mats, z_vecs = [], []
    for side, other in (("t", "r"), ("r", "t")):
        h = channels.user(side)
        u, v = state.user(side)
        w = precoders.user(side)
        if u.shape[0] != h.shape[0] or w.shape[0] != f.shape[1] or u.shape[1] != w.shape[1]:
            raise DomainError(
                f"dimension mismatch: H {h.shape}, U {u.shape}, W {w.shape}, F {f.shape}"
            )
        weight = spec.weight(side)
        cov = w @ w.conj().T
        if protocol is not ProtocolKind.TS and not precoders.shared:
            w_other = precoders.user(other)
            cov = cov + w_other @ w_other.conj().T
        proj = u.conj().T @ h  # U^H H
        left = weight * (proj.conj().T @ v @ proj)
        right = (f @ cov @ f.conj().T).T
        z_mats.append(hermitize(left * right))
        z_vecs.append(weight * np.diag(f @ w @ v @ proj))
    return TarcQuadratic(z_mat=(z_mats[0], z_mats[1]), z_vec=(z_vecs[0], z_vecs[1]))


def chi_update(alpha: np.ndarray) -> np.ndarray:
    """Closed-form minimiser chi = (alpha + alpha^2) / (1 + alpha^2) of the binarity penalty."""
    a = np.asarray(alpha, dtype=float)
    return (a + a**2) / (1.0 + a**2)


def solve_ts_mm(
    z_mat: np.ndarray,
    z_vec: np.ndarray,
    phi_init: np.ndarray,
    tol: float = MM_TOL,
    max_iter: int = MM_MAX_ITER,
) -> np.ndarray:
    """Minimise phi^H Z phi - 2 Re{phi^H conj(z)} over unit-modulus phi by MM.

    Each step sets phi <- exp(j * angle((lambda_max I - Z) phi + conj(z))),
    which never increases the objective.
    """
    phi = np.exp(1j * np.angle(np.asarray(phi_init, dtype=complex)))
    lam = max_eigenvalue(z_mat) if z_mat.size else 0.0
    value = _quadratic_value(z_mat, z_vec, phi)
    scale = max(abs(value), abs(lam) * phi.size + 2.0 * float(np.sum(np.abs(z_vec))), 1e-300)
    for iteration in range(max_iter):
        target = lam * phi - z_mat @ phi + np.conj(z_vec)
        keep = np.abs(target) <= 1e-300
        candidate = np.where(keep, phi, np.exp(1j * np.angle(target)))
        new_value = _quadratic_value(z_mat, z_vec, candidate)
        if new_value > value + 1e-12 * scale:
            logger.warning("MM step increased the objective by %.3e; stopping", new_value - value)
            break
        change = value - new_value
        phi, value = candidate, new_value
        if change <= tol * max(abs(value), 1e-300):
            logger.debug("MM converged after %d steps, objective %.6e", iteration + 1, value)
            break
    return phi


def initial_phases(quadratic: TarcQuadratic, config: StarConfig) -> StarConfig:
    """Re-optimise the phases of both sides once at fixed amplitudes."""
    phases = {}
    for side in ("t", "r"):
        z_mat, z_vec = quadratic.masked(side, config.amplitude(side))
        phi = solve_ts_mm(z_mat, z_vec, np.exp(1j * config.phase(side)))
        phases[side] = np.angle(phi)
    if config.protocol is ProtocolKind.TS:
        return StarConfig.time_split(phases["t"], phases["r"], config.tau_t)
    return StarConfig.energy_split(
        config.alpha("t"), phases["t"], phases["r"], protocol=config.protocol
    )


def _build_subproblem(
    quadratic: TarcQuadratic,
    anchor: Dict[str, np.ndarray],
    ccp_rho: float,
    binarity: Optional[Tuple[float, Dict[str, np.ndarray]]] = None,
) -> ConicProblem:
    """Convex subproblem around anchor coefficients.

    Per side: phi (M), Omega, D1, D2 (M x M Hermitian), slack s >= 0, with
    [[D1, Omega, phi], [Omega^H, D2, phi], [phi^H, phi^H, 1]] >= 0,
    Tr(D_i) <= 2 Re(phi0^H phi) - ||phi0||^2 + s and diag(Omega_t + Omega_r) = 1.
    """
    m = quadratic.m_elements
    problem = ConicProblem("tarc")
    eye = np.eye(m)
    omegas = {}
    for side in ("t", "r"):
        z_mat, z_vec = quadratic.side(side)
        phi = problem.add_complex(f"phi_{side}", m)
        omega = problem.add_hermitian(f"omega_{side}", m)
        d1 = problem.add_hermitian(f"d1_{side}", m)
        d2 = problem.add_hermitian(f"d2_{side}", m)
        slack = problem.add_real(f"s_{side}")
        omegas[side] = omega

        problem.add_hermitian_quadratic(phi, z_mat)
        problem.add_linear(-2.0 * problem.linear_form(phi, np.conj(z_vec)))
        problem.add_linear(ccp_rho * problem.linear_form(slack, np.ones(1)))

        lmi = problem.add_lmi(2 * m + 1, name=f"rank_one_{side}")
        lmi.place(d1, 0, 0)
        lmi.place(omega, 0, m)
        lmi.place(d2, m, m)
        lmi.place(phi, 0, 2 * m)
        lmi.place(phi, m, 2 * m)
        lmi.place_constant(np.ones((1, 1)), 2 * m, 2 * m)

        phi0 = anchor[side]
        bound = -float(np.real(np.vdot(phi0, phi0)))
        linear = 2.0 * problem.linear_form(phi, phi0) + problem.linear_form(slack, np.ones(1))
        for d in (d1, d2):
            problem.add_inequality(problem.linear_form(d, eye) + (-linear), bound)
        problem.add_inequality(-problem.linear_form(slack, np.ones(1)), 0.0)

        if binarity is not None:
            rho, chi = binarity
            for k in range(m):
                alpha = problem.linear_form(omega, _unit(m, k))
                problem.add_square(alpha, rho, shift=float(chi[side][k]))
                problem.add_square(alpha, rho * (1.0 - float(chi[side][k])) ** 2)

    for k in range(m):
        unit = _unit(m, k)
        form = problem.linear_form(omegas["t"], unit) + problem.linear_form(omegas["r"], unit)
        problem.add_equality(form, 1.0)
    return problem


def es_subproblem(
    quadratic: TarcQuadratic, anchor: StarConfig, penalty: float = CCP_PENALTY
) -> ConicProblem:
    """First convex subproblem of the ES procedure around a configuration."""
    phi0 = {s: anchor.coefficients(s) for s in ("t", "r")}
    return _build_subproblem(quadratic, phi0, penalty * quadratic.scale())


def _unit(m: int, k: int) -> np.ndarray:
    e = np.zeros((m, m))
    e[k, k] = 1.0
    return e


def _start_values(anchor: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    start: Dict[str, np.ndarray] = {}
    for side, phi0 in anchor.items():
        outer = np.outer(phi0, phi0.conj())
        start.update(
            {
                f"phi_{side}": phi0,
                f"omega_{side}": outer,
                f"d1_{side}": outer,
                f"d2_{side}": outer,
                f"s_{side}": np.zeros(1),
            }
        )
    return start


def _read_iterate(values: Dict[str, np.ndarray], rho: float = 0.0) -> CcpIterate:
    sides = ("t", "r")
    return CcpIterate(
        phi={s: values[f"phi_{s}"] for s in sides},
        omega={s: values[f"omega_{s}"] for s in sides},
        d1={s: values[f"d1_{s}"] for s in sides},
        d2={s: values[f"d2_{s}"] for s in sides},
        slack={s: float(values[f"s_{s}"][0]) for s in sides},
        penalty_rho=rho,
    )


def _extract(iterate: CcpIterate, fallback: StarConfig, protocol: ProtocolKind) -> StarConfig:
    """alpha from diag(Omega_l), phases from phi_l, amplitudes renormalised per element."""
    alpha_t = np.clip(np.real(np.diag(iterate.omega["t"])), 0.0, None)
    alpha_r = np.clip(np.real(np.diag(iterate.omega["r"])), 0.0, None)
    total = alpha_t + alpha_r
    share = np.where(total > 0.0, alpha_t / np.where(total > 0.0, total, 1.0), fallback.alpha("t"))
    phases = {}
    for side in ("t", "r"):
        phi = iterate.phi[side]
        phases[side] = np.where(np.abs(phi) > 1e-12, np.angle(phi), fallback.phase(side))
    return StarConfig.energy_split(share, phases["t"], phases["r"], protocol=protocol)


def _solve_subproblem(
    solver: ConicSolver, problem: ConicProblem, anchor: Dict[str, np.ndarray], context: str
) -> Dict[str, np.ndarray]:
    solution = solver.solve(problem, tol=SDP_TOL, start=_start_values(anchor))
    if solution.status is SolveStatus.INFEASIBLE:
        raise SolverError(
            "TARC subproblem has no feasible point", status="infeasible", context=context
        )
    if solution.status is not SolveStatus.OPTIMAL:
        logger.warning("%s: conic solve ended with status %s", context, solution.status.value)
    return solution.values


def solve_es(
    quadratic: TarcQuadratic,
    init: StarConfig,
    tol: float = CCP_TOL,
    max_outer: int = CCP_MAX_ITER,
    solver: Optional[ConicSolver] = None,
    penalty: float = CCP_PENALTY,
    penalty_growth: float = CCP_PENALTY_GROWTH,
    penalty_max: float = CCP_PENALTY_MAX,
) -> TarcResult:
    """Penalty CCP over the rank-one LMI relaxation for the ES protocol.

    Only improving extractions are accepted, so the history of the true
    objective is non-increasing.

    Args:
        quadratic: Per-user quadratic forms
        init: ES-feasible starting configuration
        tol: Relative objective improvement below which iteration stops
        max_outer: Maximum number of convex subproblems
        solver: Conic solver (reference interior-point solver by default)
        penalty: Initial slack penalty, relative to the quadratic's scale
        penalty_growth: Factor applied to the slack penalty per iteration
        penalty_max: Cap on the relative slack penalty
    """
    solver = solver or InteriorPointSolver()
    current = init.with_protocol(ProtocolKind.ES)
    value = quadratic.objective(current)
    result = TarcResult(config=current, objective=value, history=[value])
    scale = quadratic.scale()
    if scale == 0.0:
        return result

    rho = penalty * scale
    for outer in range(max_outer):
        anchor = {s: current.coefficients(s) for s in ("t", "r")}
        problem = _build_subproblem(quadratic, anchor, rho)
        values = _solve_subproblem(solver, problem, anchor, f"ccp iteration {outer}")
        iterate = _read_iterate(values, rho)
        candidate = _extract(iterate, current, ProtocolKind.ES)
        cand_value = quadratic.objective(candidate)
        result.iterations = outer + 1
        logger.debug(
            "ccp %d: objective %.6e -> %.6e, slack %.2e, rank-one gap %.2e",
            outer,
            value,
            cand_value,
            sum(iterate.slack.values()),
            iterate.rank_one_gap(),
        )
        rho = min(rho * penalty_growth, penalty_max * scale)
        if cand_value > value + MONOTONE_REL_TOL * max(abs(value), 1e-300):
            continue
        improvement = value - cand_value
        current, value = candidate, cand_value
        result.history.append(value)
        result.rank_one_gap = iterate.rank_one_gap()
        if improvement <= tol * max(abs(value), 1e-300):
            break

    result.config, result.objective = current, value
    if result.rank_one_gap > RANK_ONE_GAP_TOL:
        result.warnings.append(f"rank-one gap {result.rank_one_gap:.2e} at CCP termination")
        logger.warning("ES relaxation ended with rank-one gap %.2e", result.rank_one_gap)
    return result


def solve_ms(
    quadratic: TarcQuadratic,
    init: StarConfig,
    rho_schedule: RhoSchedule = RhoSchedule(),
    tol: float = CCP_TOL,
    max_outer: int = CCP_MAX_ITER,
    solver: Optional[ConicSolver] = None,
    penalty: float = CCP_PENALTY,
    penalty_growth: float = CCP_PENALTY_GROWTH,
    penalty_max: float = CCP_PENALTY_MAX,
) -> TarcResult:
    """Binary-amplitude TARC update by an escalating binarity penalty.

    Alternates the closed-form chi update with one penalised convex
    subproblem, growing rho until every alpha is within BINARY_TOL of 0 or 1,
    then rounds alpha and re-optimises the phases once at the binary
    amplitudes.
    """
    solver = solver or InteriorPointSolver()
    relaxed = init.with_protocol(ProtocolKind.ES)
    warnings: List[str] = []
    scale = quadratic.scale()
    norm = quadratic.frobenius() or scale
    rho = rho_schedule.initial * norm
    rho_cap = rho_schedule.maximum * norm
    ccp_rho = penalty * scale
    rounds = 0

    if scale > 0.0:
        previous = None
        while rounds < max(max_outer, 1):
            alpha = {s: relaxed.alpha(s) for s in ("t", "r")}
            chi = {s: chi_update(alpha[s]) for s in ("t", "r")}
            anchor = {s: relaxed.coefficients(s) for s in ("t", "r")}
            problem = _build_subproblem(quadratic, anchor, ccp_rho, binarity=(rho, chi))
            values = _solve_subproblem(solver, problem, anchor, f"binarity round {rounds}")
            relaxed = _extract(_read_iterate(values, rho), relaxed, ProtocolKind.ES)
            rounds += 1
            distance = float(np.max(np.minimum(relaxed.alpha("t"), relaxed.alpha("r"))))
            logger.debug("binarity round %d: rho=%.3e distance=%.3e", rounds, rho, distance)
            if distance < BINARY_TOL:
                break
            if previous is not None and abs(previous - distance) <= tol * max(distance, 1e-300):
                if rho >= rho_cap:
                    break
            previous = distance
            if rho >= rho_cap:
                break
            rho = min(rho * rho_schedule.growth, rho_cap)
            ccp_rho = min(ccp_rho * penalty_growth, penalty_max * scale)
        else:
            distance = float(np.max(np.minimum(relaxed.alpha("t"), relaxed.alpha("r"))))
        if distance >= BINARY_TOL:
            warnings.append(f"binarity not reached (distance {distance:.2e}) at rho={rho:.2e}")
            logger.warning("MS penalty ended %.2e away from binary amplitudes", distance)

    binary = (relaxed.alpha("t") >= 0.5).astype(float)
    rounded = StarConfig.energy_split(binary, relaxed.phase_t, relaxed.phase_r, ProtocolKind.MS)
    final = initial_phases(quadratic, rounded)
    value = quadratic.objective(final)

    init_value = quadratic.objective(init)
    init_binary = init.protocol is not ProtocolKind.TS and bool(
        np.all(np.minimum(init.alpha("t"), init.alpha("r")) <= BINARY_TOL)
    )
    if init_binary and init_value < value:
        final, value = init.with_protocol(ProtocolKind.MS), init_value
    return TarcResult(
        config=final,
        objective=value,
        history=[init_value, value],
        iterations=rounds,
        warnings=warnings,
    )


def solve_ts(
    quadratic: TarcQuadratic, init: StarConfig, tol: float = MM_TOL, max_iter: int = MM_MAX_ITER
) -> TarcResult:
    """Independent unit-modulus phase updates of both sides (TS keeps its time split)."""
    phases = {}
    for side in ("t", "r"):
        z_mat, z_vec = quadratic.side(side)
        phi = solve_ts_mm(z_mat, z_vec, init.coefficients(side), tol=tol, max_iter=max_iter)
        phases[side] = np.angle(phi)
    config = StarConfig.time_split(phases["t"], phases["r"], init.tau_t)
    start = quadratic.objective(init)
    value = quadratic.objective(config)
    return TarcResult(config=config, objective=value, history=[start, value], iterations=1)
