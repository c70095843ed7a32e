"""Conventional reflecting-only RIS baseline."""

import numpy as np

from src.channel import ChannelSet
from src.model import ProtocolKind, StarConfig, SystemSpec
from src.tarc import TarcQuadratic, TarcResult, solve_ts_mm

from .base import BcdAlgorithm, SolveOptions


class ReflectingOnlyAlgorithm(BcdAlgorithm):
    """
    All incident energy is reflected to the R user (alpha_r = 1, alpha_t = 0).

    Only the reflect phases are optimised, by MM; the T user's effective
    channel is zero, so its precoder vanishes after the first BCD step and
    its rate is exactly 0.
    """

    label = "RO"
    protocol = ProtocolKind.ES

    def get_name(self) -> str:
        """Get the algorithm name."""
        return "Reflecting-Only RIS"

    def get_description(self) -> str:
        """Get the algorithm description."""
        return "Baseline: pure reflection towards the R user, phases by MM"

    def initial_config(self, spec: SystemSpec, channels: ChannelSet) -> StarConfig:
        zeros = np.zeros(spec.m_elements)
        return StarConfig.energy_split(zeros, zeros, zeros, protocol=ProtocolKind.ES)

    def update_tarc(
        self, quadratic: TarcQuadratic, star: StarConfig, options: SolveOptions
    ) -> TarcResult:
        z_mat, z_vec = quadratic.side("r")
        phi = solve_ts_mm(
            z_mat, z_vec, star.coefficients("r"), tol=options.mm_tol, max_iter=options.mm_max_iter
        )
        config = StarConfig.energy_split(
            np.zeros(star.m_elements), star.phase_t, np.angle(phi), protocol=ProtocolKind.ES
        )
        start, value = quadratic.objective(star), quadratic.objective(config)
        return TarcResult(config=config, objective=value, history=[start, value], iterations=1)
