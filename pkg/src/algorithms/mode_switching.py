"""Mode switching: each element either fully transmits or fully reflects."""

import logging
from typing import Tuple

import numpy as np

from src.channel import ChannelSet
from src.model import PrecoderSet, ProtocolKind, StarConfig, SystemSpec
from src.precoder import assemble, solve_dual
from src.tarc import TarcQuadratic, TarcResult, assemble_tarc, initial_phases, solve_ms
from src.wmmse import update_state

from .base import BcdAlgorithm, SolveOptions, SolveReport, build_report, evaluate_wsr

logger = logging.getLogger(__name__)


class ModeSwitchingAlgorithm(BcdAlgorithm):
    """
    BCD whose coefficient step drives the relaxed amplitudes to {0, 1} with an
    escalating binarity penalty, then rounds and re-optimises the phases.

    Starts from the same point as energy splitting (alpha = 1/2, same phases
    and precoders). The first coefficient step binarises that start; an
    alternating transmit/reflect assignment competes with it, and the better
    binary point seeds the BCD loop, whose history holds only binary iterates.
    """

    label = "MS"
    protocol = ProtocolKind.MS

    def get_name(self) -> str:
        """Get the algorithm name."""
        return "Mode Switching"

    def get_description(self) -> str:
        """Get the algorithm description."""
        return "Binary transmit/reflect assignment per element via penalty rounds"

    def update_tarc(
        self, quadratic: TarcQuadratic, star: StarConfig, options: SolveOptions
    ) -> TarcResult:
        return solve_ms(
            quadratic,
            star,
            rho_schedule=options.rho_schedule,
            tol=options.ccp_tol,
            max_outer=options.ccp_max_iter,
            solver=self.solver,
            penalty=options.ccp_penalty,
            penalty_growth=options.ccp_penalty_growth,
            penalty_max=options.ccp_penalty_max,
        )

    @staticmethod
    def alternating(quadratic: TarcQuadratic, star: StarConfig) -> StarConfig:
        """Even elements transmit, odd ones reflect, phases re-fitted by MM."""
        alpha_t = (np.arange(star.m_elements) % 2 == 0).astype(float)
        binary = StarConfig.energy_split(alpha_t, star.phase_t, star.phase_r, ProtocolKind.MS)
        return initial_phases(quadratic, binary)

    def binarize(
        self,
        spec: SystemSpec,
        channels: ChannelSet,
        star: StarConfig,
        precoders: PrecoderSet,
        options: SolveOptions,
    ) -> Tuple[StarConfig, PrecoderSet, TarcResult]:
        """One BCD step from the relaxed start that lands on binary amplitudes."""
        state = update_state(spec, channels, precoders, star)
        precoders = solve_dual(assemble(spec, channels, star, state))
        quadratic = assemble_tarc(spec, channels, precoders, state, star.protocol)
        tarc = self.update_tarc(quadratic, star, options)
        fallback = self.alternating(quadratic, star)
        penalised = evaluate_wsr(spec, channels, precoders, tarc.config)
        alternate = evaluate_wsr(spec, channels, precoders, fallback)
        if alternate > penalised:
            logger.debug("MS start: alternating %.6f beats penalised %.6f", alternate, penalised)
            return fallback, precoders, tarc
        return tarc.config, precoders, tarc

    def solve(self, spec: SystemSpec, channels: ChannelSet, options: SolveOptions) -> SolveReport:
        self.reset()
        self.solver = options.make_solver()
        start = self.randomize_phases(self.initial_config(spec, channels), options.seed)
        relaxed, precoders = self.initial_point(spec, channels, start)
        star, precoders, first = self.binarize(spec, channels, relaxed, precoders, options)
        outcome = self.run_bcd(spec, channels, star, precoders, options, options.bcd_max_iter)
        outcome.iterations += 1
        outcome.warnings[:0] = first.warnings
        return build_report(self.label, spec, channels, outcome)
