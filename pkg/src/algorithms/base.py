"""Base class for protocol algorithms and the block coordinate descent loop they share."""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.channel import ChannelSet
from src.config import (
    BCD_MAX_ITER,
    BCD_TOL,
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
    TAU_GRID_STEP,
    TAU_REFINE_ROUNDS,
    TS_INNER_MAX_ITER,
    TWO_PI,
)
from src.errors import DomainError, SolverError, Violation
from src.model import (
    PrecoderSet,
    ProtocolKind,
    StarConfig,
    SystemSpec,
    Traffic,
    user_rates,
    wsr,
)
from src.precoder import assemble, initial_precoders, solve_dual
from src.solvers import SOLVERS, ConicSolver, get_solver, is_known_solver
from src.tarc import RhoSchedule, TarcQuadratic, TarcResult, assemble_tarc, initial_phases
from src.wmmse import update_state

logger = logging.getLogger(__name__)


def check_options(values: Mapping[str, Any]) -> List[Violation]:
    """Violations of the solve-option invariants, by option name."""
    found: List[Violation] = []
    for name in ("bcd_tol", "ccp_tol", "mm_tol", "tau_grid_step", "rho_initial"):
        if not values[name] > 0.0:
            found.append(Violation(name, f"must be > 0, got {values[name]}"))
    for name in ("bcd_max_iter", "ccp_max_iter", "mm_max_iter", "ts_inner_max_iter"):
        if values[name] < 1:
            found.append(Violation(name, f"must be >= 1, got {values[name]}"))
    for name in ("tau_refine_rounds", "seed"):
        if values[name] < 0:
            found.append(Violation(name, "must be >= 0"))
    step = values["tau_grid_step"]
    if step > 0.0:
        steps = round(1.0 / step)
        if steps < 1 or abs(steps * step - 1.0) > 1e-9:
            found.append(Violation("tau_grid_step", f"{step} does not divide 1 evenly"))
    if not (values["rho_growth"] > 1.0 and values["rho_max"] >= values["rho_initial"]):
        found.append(Violation("rho_growth", "need rho_growth > 1 and rho_max >= rho_initial"))
    if not (values["ccp_penalty"] > 0.0 and values["ccp_penalty_growth"] >= 1.0):
        found.append(Violation("ccp_penalty", "need ccp_penalty > 0 and growth >= 1"))
    if values["ccp_penalty_max"] < values["ccp_penalty"]:
        found.append(Violation("ccp_penalty_max", "must be >= ccp_penalty"))
    if not is_known_solver(values["solver"]):
        found.append(
            Violation(
                "solver",
                f"unknown conic solver {values['solver']!r}; use one of {sorted(SOLVERS)} "
                "or 'cvxpy[:SOLVER]'",
            )
        )
    return found


@dataclass(frozen=True)
class SolveOptions:
    """Stopping rules, iteration budgets and penalty schedules of one solve."""

    bcd_tol: float = BCD_TOL
    bcd_max_iter: int = BCD_MAX_ITER
    ccp_tol: float = CCP_TOL
    ccp_max_iter: int = CCP_MAX_ITER
    mm_tol: float = MM_TOL
    mm_max_iter: int = MM_MAX_ITER
    tau_grid_step: float = TAU_GRID_STEP
    tau_refine_rounds: int = TAU_REFINE_ROUNDS
    ts_inner_max_iter: int = TS_INNER_MAX_ITER
    rho_initial: float = MS_RHO_INITIAL
    rho_growth: float = MS_RHO_GROWTH
    rho_max: float = MS_RHO_MAX
    ccp_penalty: float = CCP_PENALTY
    ccp_penalty_growth: float = CCP_PENALTY_GROWTH
    ccp_penalty_max: float = CCP_PENALTY_MAX
    solver: str = "interior-point"
    seed: int = 0

    def __post_init__(self) -> None:
        violations = self.violations()
        if violations:
            raise DomainError("; ".join(str(v) for v in violations))

    def violations(self) -> List[Violation]:
        return check_options(vars(self))

    @property
    def rho_schedule(self) -> RhoSchedule:
        return RhoSchedule(self.rho_initial, self.rho_growth, self.rho_max)

    def tau_grid(self) -> np.ndarray:
        """{0, step, ..., 1} without floating-point drift."""
        steps = round(1.0 / self.tau_grid_step)
        return np.arange(steps + 1) / steps

    def make_solver(self) -> ConicSolver:
        return get_solver(self.solver)


@dataclass
class SolveReport:
    """Everything one protocol solve produced."""

    label: str
    protocol: ProtocolKind
    traffic: Traffic
    final_wsr: float
    per_user_rates: Tuple[float, float]
    wsr_history: List[float]
    config: StarConfig
    precoders: PrecoderSet
    constraint_residuals: Dict[str, float] = field(default_factory=dict)
    rank_one_gaps: List[float] = field(default_factory=list)
    tau_star: Optional[float] = None
    tau_curve: Dict[float, float] = field(default_factory=dict)
    iterations: int = 0
    wall_ms: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def is_monotone(self, rel_tol: float = MONOTONE_REL_TOL) -> bool:
        """True when wsr_history never drops by more than rel_tol (relative)."""
        history = self.wsr_history
        return all(
            b >= a - rel_tol * max(abs(a), 1e-300) for a, b in zip(history[:-1], history[1:])
        )


@dataclass
class BcdOutcome:
    """Final iterate and bookkeeping of one BCD run."""

    config: StarConfig
    precoders: PrecoderSet
    wsr: float
    history: List[float]
    iterations: int
    rank_one_gaps: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def evaluate_wsr(
    spec: SystemSpec, channels: ChannelSet, precoders: PrecoderSet, star: StarConfig
) -> float:
    """WSR without constraint checks, for intermediate iterates."""
    rate_t, rate_r = user_rates(spec, channels, precoders, star)
    return spec.weights[0] * rate_t + spec.weights[1] * rate_r


def constraint_residuals(
    spec: SystemSpec, precoders: PrecoderSet, star: StarConfig
) -> Dict[str, float]:
    """Magnitudes of the protocol and power constraint residuals of a solution."""
    residuals: Dict[str, float] = {}
    if star.protocol is ProtocolKind.TS:
        residuals["unit_modulus"] = float(
            max(np.max(np.abs(star.amp_t - 1.0)), np.max(np.abs(star.amp_r - 1.0)))
        )
        residuals["time_split"] = abs(star.tau_t + star.tau_r - 1.0)
        power = precoders.power((star.tau_t, star.tau_r))
    else:
        residuals["energy"] = float(np.max(np.abs(star.alpha("t") + star.alpha("r") - 1.0)))
        power = precoders.power()
    if star.protocol is ProtocolKind.MS:
        residuals["binary"] = float(np.max(np.minimum(star.alpha("t"), star.alpha("r"))))
    residuals["power"] = max(0.0, power - spec.power_budget) / spec.power_budget
    return residuals


def build_report(
    label: str,
    spec: SystemSpec,
    channels: ChannelSet,
    outcome: BcdOutcome,
    **extra: object,
) -> SolveReport:
    """Check the final iterate against every constraint and wrap it in a SolveReport."""
    final = wsr(spec, channels, outcome.precoders, outcome.config)
    return SolveReport(
        label=label,
        protocol=outcome.config.protocol,
        traffic=spec.traffic,
        final_wsr=final,
        per_user_rates=user_rates(spec, channels, outcome.precoders, outcome.config),
        wsr_history=list(outcome.history),
        config=outcome.config,
        precoders=outcome.precoders,
        constraint_residuals=constraint_residuals(spec, outcome.precoders, outcome.config),
        rank_one_gaps=list(outcome.rank_one_gaps),
        iterations=outcome.iterations,
        warnings=list(outcome.warnings),
        **extra,  # type: ignore[arg-type]
    )


class ProtocolAlgorithm(ABC):
    """
    Base class for all joint precoder / STAR-RIS coefficient algorithms.

    To add a scheme:
    1. Inherit from this class (or from BcdAlgorithm for a plain BCD loop)
    2. Implement solve()
    3. Optionally override get_name(), get_description() and the hooks

    Example:
        class FixedPhases(BcdAlgorithm):
            label = "FIX"

            def update_tarc(self, quadratic, star, options):
                return TarcResult(config=star, objective=quadratic.objective(star))
    """

    label = "?"

    def __init__(self) -> None:
        self.solver: Optional[ConicSolver] = None

    @abstractmethod
    def solve(self, spec: SystemSpec, channels: ChannelSet, options: SolveOptions) -> SolveReport:
        """
        Jointly optimise the precoders and the STAR-RIS coefficients.

        Args:
            spec: Antenna counts, weights, power budget and traffic mode
            channels: Channel realisation (F, H_t, H_r)
            options: Stopping rules and iteration budgets

        Returns:
            SolveReport whose configuration passes model.validate

        Note:
            - Reports are deterministic given (spec, channels, options)
            - SolverError raised inside carries the failing iteration in its context
            - wsr_history is non-decreasing within relative 1e-6
        """

    def get_name(self) -> str:
        """
        Get the display name of this algorithm.

        Returns:
            Human-readable name for the algorithm
        """
        return self.__class__.__name__

    def get_description(self) -> str:
        """
        Get a brief description of this algorithm.

        Returns:
            Brief description of how the algorithm works
        """
        return "No description provided"

    def reset(self) -> None:
        """
        Drop per-solve state (the conic solver instance).

        Override this if your algorithm keeps more state between solves.
        """
        self.solver = None

    def on_iteration(self, iteration: int, wsr_value: float) -> None:
        """
        Called after every accepted BCD iteration.

        Override this to trace progress.
        """
        pass


class BcdAlgorithm(ProtocolAlgorithm):
    """Block coordinate descent over (U, V) -> W -> Phi with a protocol-specific Phi step."""

    protocol = ProtocolKind.ES

    @abstractmethod
    def update_tarc(
        self, quadratic: TarcQuadratic, star: StarConfig, options: SolveOptions
    ) -> TarcResult:
        """Coefficient block update for fixed precoders and WMMSE state."""

    def initial_config(self, spec: SystemSpec, channels: ChannelSet) -> StarConfig:
        """Equal energy split with zero phases; subclasses may start elsewhere."""
        return StarConfig.uniform(self.protocol, spec.m_elements)

    @staticmethod
    def randomize_phases(star: StarConfig, seed: int) -> StarConfig:
        """Uniform random starting phases for seed > 0; seed 0 keeps the given phases."""
        if seed == 0:
            return star
        rng = np.random.default_rng(seed)
        m = star.m_elements
        return replace(
            star,
            phase_t=rng.uniform(0.0, TWO_PI, m),
            phase_r=rng.uniform(0.0, TWO_PI, m),
        )

    def initial_point(
        self, spec: SystemSpec, channels: ChannelSet, star: Optional[StarConfig] = None
    ) -> Tuple[StarConfig, PrecoderSet]:
        """Initial precoders at the initial configuration, then one MM pass on the phases."""
        star = star or self.initial_config(spec, channels)
        precoders = initial_precoders(spec, channels, star)
        state = update_state(spec, channels, precoders, star)
        quadratic = assemble_tarc(spec, channels, precoders, state, star.protocol)
        return initial_phases(quadratic, star), precoders

    def solve(self, spec: SystemSpec, channels: ChannelSet, options: SolveOptions) -> SolveReport:
        self.reset()
        self.solver = options.make_solver()
        start = self.randomize_phases(self.initial_config(spec, channels), options.seed)
        star, precoders = self.initial_point(spec, channels, start)
        outcome = self.run_bcd(spec, channels, star, precoders, options, options.bcd_max_iter)
        return build_report(self.label, spec, channels, outcome)

    def run_bcd(
        self,
        spec: SystemSpec,
        channels: ChannelSet,
        star: StarConfig,
        precoders: PrecoderSet,
        options: SolveOptions,
        max_iter: int,
    ) -> BcdOutcome:
        """
        Alternate the three block updates until the relative WSR gain drops below bcd_tol.

        A step that lowers the WSR by more than MONOTONE_REL_TOL (relative) is
        replaced by the precoder-only step when that one does not lower it,
        and otherwise rejected; both events are recorded as warnings.

        Args:
            spec: System description
            channels: Channel realisation
            star: Starting configuration
            precoders: Starting precoders
            options: Stopping rules
            max_iter: Outer iteration cap

        Returns:
            BcdOutcome with the best iterate and its WSR history
        """
        current = evaluate_wsr(spec, channels, precoders, star)
        outcome = BcdOutcome(
            config=star, precoders=precoders, wsr=current, history=[current], iterations=0
        )
        for iteration in range(max_iter):
            try:
                state = update_state(spec, channels, precoders, star)
                new_precoders = solve_dual(assemble(spec, channels, star, state))
                quadratic = assemble_tarc(spec, channels, new_precoders, state, star.protocol)
                tarc = self.update_tarc(quadratic, star, options)
            except SolverError as exc:
                raise exc.with_context(f"BCD iteration {iteration}") from exc
            outcome.iterations = iteration + 1
            outcome.warnings.extend(tarc.warnings)
            if tarc.rank_one_gap:
                outcome.rank_one_gaps.append(tarc.rank_one_gap)

            candidate = evaluate_wsr(spec, channels, new_precoders, tarc.config)
            floor = current - MONOTONE_REL_TOL * max(abs(current), 1e-300)
            new_star = tarc.config
            if candidate < floor:
                fallback = evaluate_wsr(spec, channels, new_precoders, star)
                if fallback >= floor:
                    message = (
                        f"iteration {iteration}: coefficient step lowered WSR "
                        f"{current:.6f} -> {candidate:.6f}; kept previous coefficients"
                    )
                    new_star, candidate = star, fallback
                else:
                    message = (
                        f"iteration {iteration}: BCD step lowered WSR "
                        f"{current:.6f} -> {candidate:.6f}; kept previous iterate"
                    )
                    logger.warning(message)
                    outcome.warnings.append(message)
                    break
                logger.warning(message)
                outcome.warnings.append(message)

            gain = (candidate - current) / max(abs(current), 1e-300)
            star, precoders, current = new_star, new_precoders, candidate
            outcome.config, outcome.precoders, outcome.wsr = star, precoders, current
            outcome.history.append(current)
            logger.debug("%s BCD %d: WSR %.6f (gain %.3e)", self.label, iteration, current, gain)
            self.on_iteration(iteration, current)
            if gain < options.bcd_tol or not math.isfinite(gain):
                break
        return outcome
