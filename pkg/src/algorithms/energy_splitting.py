"""Energy splitting: every element transmits and reflects with per-element energy shares."""

from src.model import ProtocolKind, StarConfig
from src.tarc import TarcQuadratic, TarcResult, solve_es

from .base import BcdAlgorithm, SolveOptions


class EnergySplittingAlgorithm(BcdAlgorithm):
    """
    BCD with the penalty-CCP coefficient update over the rank-one LMI relaxation.

    Starts from alpha = 1/2 on every element with phases from one MM pass.
    """

    label = "ES"
    protocol = ProtocolKind.ES

    def get_name(self) -> str:
        """Get the algorithm name."""
        return "Energy Splitting"

    def get_description(self) -> str:
        """Get the algorithm description."""
        return "Continuous amplitude split per element, coefficients by penalty CCP"

    def update_tarc(
        self, quadratic: TarcQuadratic, star: StarConfig, options: SolveOptions
    ) -> TarcResult:
        return solve_es(
            quadratic,
            star,
            tol=options.ccp_tol,
            max_outer=options.ccp_max_iter,
            solver=self.solver,
            penalty=options.ccp_penalty,
            penalty_growth=options.ccp_penalty_growth,
            penalty_max=options.ccp_penalty_max,
        )
