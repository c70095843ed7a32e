"""Public entry points: one solve per scheme, each returning a SolveReport."""

import logging
import time
from typing import Callable, Dict, Optional, Type

from src.algorithms import (
    EnergySplittingAlgorithm,
    ModeSwitchingAlgorithm,
    ProtocolAlgorithm,
    ReflectingOnlyAlgorithm,
    SolveOptions,
    SolveReport,
    TimeSwitchingAlgorithm,
)
from src.channel import ChannelSet
from src.errors import DomainError
from src.model import ProtocolKind, SystemSpec

logger = logging.getLogger(__name__)

ALGORITHMS: Dict[str, Type[ProtocolAlgorithm]] = {
    "ES": EnergySplittingAlgorithm,
    "MS": ModeSwitchingAlgorithm,
    "TS": TimeSwitchingAlgorithm,
    "RO": ReflectingOnlyAlgorithm,
}

SCHEME_LABELS = tuple(ALGORITHMS)


def _timed(
    algorithm: ProtocolAlgorithm,
    spec: SystemSpec,
    channels: ChannelSet,
    options: Optional[SolveOptions],
) -> SolveReport:
    if spec.m_elements != channels.m_elements or spec.n_tx != channels.n_tx:
        raise DomainError(
            f"spec (M={spec.m_elements}, N={spec.n_tx}) does not match channels "
            f"(M={channels.m_elements}, N={channels.n_tx})"
        )
    options = options or SolveOptions()
    start = time.perf_counter()
    report = algorithm.solve(spec, channels, options)
    report.wall_ms = 1e3 * (time.perf_counter() - start)
    logger.debug(
        "%s/%s: WSR %.6f after %d iterations in %.1f ms",
        report.label,
        spec.traffic.value,
        report.final_wsr,
        report.iterations,
        report.wall_ms,
    )
    return report


def solve_es(
    spec: SystemSpec, channels: ChannelSet, options: Optional[SolveOptions] = None
) -> SolveReport:
    """Energy splitting by BCD with penalty-CCP coefficient updates."""
    return _timed(EnergySplittingAlgorithm(), spec, channels, options)


def solve_ms(
    spec: SystemSpec, channels: ChannelSet, options: Optional[SolveOptions] = None
) -> SolveReport:
    """Mode switching: as solve_es with binary amplitudes."""
    return _timed(ModeSwitchingAlgorithm(), spec, channels, options)


def solve_ts(
    spec: SystemSpec, channels: ChannelSet, options: Optional[SolveOptions] = None
) -> SolveReport:
    """Time switching: inner BCD per time split, outer grid plus golden-section search."""
    return _timed(TimeSwitchingAlgorithm(), spec, channels, options)


def solve_reflecting_only(
    spec: SystemSpec, channels: ChannelSet, options: Optional[SolveOptions] = None
) -> SolveReport:
    """Conventional reflecting-only RIS baseline serving the R user."""
    return _timed(ReflectingOnlyAlgorithm(), spec, channels, options)


def solve_broadcast(
    spec: SystemSpec,
    channels: ChannelSet,
    options: Optional[SolveOptions] = None,
    protocol: ProtocolKind = ProtocolKind.ES,
) -> SolveReport:
    """Broadcast traffic: one shared precoder under ES/MS, unicast TS otherwise.

    Raises:
        DomainError: if spec.traffic is not broadcast
    """
    if not spec.is_broadcast:
        raise DomainError("solve_broadcast needs traffic = broadcast")
    solvers: Dict[ProtocolKind, Callable[..., SolveReport]] = {
        ProtocolKind.ES: solve_es,
        ProtocolKind.MS: solve_ms,
        ProtocolKind.TS: solve_ts,
    }
    return solvers[protocol](spec, channels, options)


def solve_scheme(
    label: str,
    spec: SystemSpec,
    channels: ChannelSet,
    options: Optional[SolveOptions] = None,
) -> SolveReport:
    """Dispatch by scheme label ('ES', 'MS', 'TS' or 'RO')."""
    key = label.upper()
    if key not in ALGORITHMS:
        raise DomainError(f"unknown scheme {label!r}; expected one of {SCHEME_LABELS}")
    return _timed(ALGORITHMS[key](), spec, channels, options)
