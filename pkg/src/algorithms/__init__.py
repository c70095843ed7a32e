"""Joint precoder and STAR-RIS coefficient algorithms, one class per scheme."""

from .base import (
    BcdAlgorithm,
    BcdOutcome,
    ProtocolAlgorithm,
    SolveOptions,
    SolveReport,
    check_options,
    constraint_residuals,
    evaluate_wsr,
)
from .energy_splitting import EnergySplittingAlgorithm
from .mode_switching import ModeSwitchingAlgorithm
from .reflecting_only import ReflectingOnlyAlgorithm
from .time_switching import TimeSwitchingAlgorithm

__all__ = [
    "BcdAlgorithm",
    "BcdOutcome",
    "ProtocolAlgorithm",
    "SolveOptions",
    "SolveReport",
    "check_options",
    "constraint_residuals",
    "evaluate_wsr",
    "EnergySplittingAlgorithm",
    "ModeSwitchingAlgorithm",
    "ReflectingOnlyAlgorithm",
    "TimeSwitchingAlgorithm",
]
