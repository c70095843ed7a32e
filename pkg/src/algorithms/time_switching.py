"""Time switching: all elements transmit in one slot and reflect in the other."""

import logging
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.channel import ChannelSet
from src.model import ProtocolKind, StarConfig, SystemSpec
from src.tarc import TarcQuadratic, TarcResult, solve_ts

from .base import BcdAlgorithm, BcdOutcome, SolveOptions, SolveReport, build_report

logger = logging.getLogger(__name__)


class TimeSwitchingAlgorithm(BcdAlgorithm):
    """
    Two-layer search: an inner BCD over (U, V), W and unit-modulus phases for
    a fixed time split, and an outer one-dimensional search over tau_t.

    The outer layer scans the grid {0, step, ..., 1} and then refines around
    the best grid point with a golden-section search. Broadcast traffic is
    served exactly like unicast since each slot carries a single user.
    """

    label = "TS"
    protocol = ProtocolKind.TS

    def get_name(self) -> str:
        """Get the algorithm name."""
        return "Time Switching"

    def get_description(self) -> str:
        """Get the algorithm description."""
        return "Per-slot unit-modulus phases by MM, time split by grid and golden search"

    def update_tarc(
        self, quadratic: TarcQuadratic, star: StarConfig, options: SolveOptions
    ) -> TarcResult:
        return solve_ts(quadratic, star, tol=options.mm_tol, max_iter=options.mm_max_iter)

    def solve_fixed_tau(
        self, spec: SystemSpec, channels: ChannelSet, tau_t: float, options: SolveOptions
    ) -> BcdOutcome:
        """Inner layer: BCD at a fixed time split."""
        zeros = np.zeros(spec.m_elements)
        start = self.randomize_phases(StarConfig.time_split(zeros, zeros, tau_t), options.seed)
        star, precoders = self.initial_point(spec, channels, start)
        return self.run_bcd(spec, channels, star, precoders, options, options.ts_inner_max_iter)

    def solve(self, spec: SystemSpec, channels: ChannelSet, options: SolveOptions) -> SolveReport:
        self.reset()
        self.solver = options.make_solver()
        cache: Dict[float, BcdOutcome] = {}

        def run(tau_t: float) -> BcdOutcome:
            key = float(np.clip(tau_t, 0.0, 1.0))
            if key not in cache:
                cache[key] = self.solve_fixed_tau(spec, channels, key, options)
                logger.debug("TS tau_t=%.4f: WSR %.6f", key, cache[key].wsr)
            return cache[key]

        grid = options.tau_grid()
        values = [run(tau).wsr for tau in grid]
        best = int(np.argmax(values))
        if options.tau_refine_rounds > 0 and 0 < best < len(grid) - 1:
            bracket = (float(grid[best - 1]), float(grid[best]), float(grid[best + 1]))
            try:
                minimize_scalar(
                    lambda tau: -run(tau).wsr,
                    bracket=bracket,
                    method="golden",
                    options={"maxiter": options.tau_refine_rounds},
                )
            except ValueError as exc:
                # flat bracket: the grid optimum stands
                logger.debug("golden-section refinement skipped: %s", exc)

        tau_star, outcome = self._best(cache)
        report = build_report(
            self.label,
            spec,
            channels,
            outcome,
            tau_star=tau_star,
            tau_curve={tau: cache[tau].wsr for tau in sorted(cache)},
        )
        report.iterations = sum(o.iterations for o in cache.values())
        return report

    @staticmethod
    def _best(cache: Dict[float, BcdOutcome]) -> Tuple[float, BcdOutcome]:
        # ties go to the smaller tau_t so results do not depend on evaluation order
        tau = max(sorted(cache), key=lambda key: cache[key].wsr)
        return tau, cache[tau]
