"""Core system types, protocol constraint validation and rate / WSR evaluation."""

from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.channel import AntennaCounts, ChannelSet
from src.config import (
    BINARY_TOL,
    ENERGY_TOL,
    N_STREAMS,
    N_TX,
    N_USER_R,
    N_USER_T,
    POWER_BUDGET_DBM,
    POWER_REL_TOL,
    TWO_PI,
    UNIT_MODULUS_TOL,
    WEIGHT_SUM_TOL,
    WEIGHTS,
    M_ELEMENTS_DESK,
    NEGATIVE_RATE_TOL,
    NOISE_POWER_DBM,
    dbm_to_watts,
    wrap_phase,
)
from src.errors import DomainError, NumericalError, ValidationError, Violation
from src.linalg import log2det_pd

SIDES = ("t", "r")


class ProtocolKind(Enum):
    """Operating protocol of the STAR-RIS."""

    ES = "ES"  # energy splitting
    MS = "MS"  # mode switching
    TS = "TS"  # time switching

    @classmethod
    def parse(cls, value: str) -> "ProtocolKind":
        try:
            return cls(value.upper())
        except ValueError as exc:
            raise DomainError(f"unknown protocol {value!r}, expected one of ES, MS, TS") from exc


class Traffic(Enum):
    UNICAST = "unicast"
    BROADCAST = "broadcast"

    @classmethod
    def parse(cls, value: str) -> "Traffic":
        try:
            return cls(value.lower())
        except ValueError as exc:
            raise DomainError(f"unknown traffic mode {value!r}") from exc


def _side_index(side: str) -> int:
    if side not in SIDES:
        raise DomainError(f"unknown side {side!r}, expected 't' or 'r'")
    return SIDES.index(side)


@dataclass(frozen=True, eq=False)
class StarConfig:
    """Transmitting and reflecting coefficients of all M elements.

    Amplitudes are stored as sqrt(alpha); phases in radians. The time split
    (tau_t, tau_r) only carries meaning under TS.
    """

    protocol: ProtocolKind
    amp_t: np.ndarray
    amp_r: np.ndarray
    phase_t: np.ndarray
    phase_r: np.ndarray
    tau_t: float = 0.5
    tau_r: float = 0.5

    def __post_init__(self) -> None:
        for name in ("amp_t", "amp_r", "phase_t", "phase_r"):
            value = np.asarray(getattr(self, name), dtype=float).reshape(-1).copy()
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        m = self.amp_t.size
        if m < 1 or any(getattr(self, n).size != m for n in ("amp_r", "phase_t", "phase_r")):
            raise DomainError("amplitude and phase vectors must share a non-zero length")

    @property
    def m_elements(self) -> int:
        return int(self.amp_t.size)

    def amplitude(self, side: str) -> np.ndarray:
        return (self.amp_t, self.amp_r)[_side_index(side)]

    def alpha(self, side: str) -> np.ndarray:
        """Per-element energy coefficients alpha = amp^2."""
        return self.amplitude(side) ** 2

    def phase(self, side: str) -> np.ndarray:
        return (self.phase_t, self.phase_r)[_side_index(side)]

    def tau(self, side: str) -> float:
        return (self.tau_t, self.tau_r)[_side_index(side)]

    def coefficients(self, side: str) -> np.ndarray:
        """Complex coefficient vector sqrt(alpha) * exp(j*phi) of one side."""
        return self.amplitude(side) * np.exp(1j * self.phase(side))

    def with_protocol(self, protocol: ProtocolKind) -> "StarConfig":
        return replace(self, protocol=protocol)

    def with_tau(self, tau_t: float) -> "StarConfig":
        return replace(self, tau_t=float(tau_t), tau_r=float(1.0 - tau_t))

    def mirrored(self) -> "StarConfig":
        """Swap the T and R sides."""
        return replace(
            self,
            amp_t=self.amp_r,
            amp_r=self.amp_t,
            phase_t=self.phase_r,
            phase_r=self.phase_t,
            tau_t=self.tau_r,
            tau_r=self.tau_t,
        )

    @classmethod
    def energy_split(
        cls,
        alpha_t: np.ndarray,
        phase_t: np.ndarray,
        phase_r: np.ndarray,
        protocol: ProtocolKind = ProtocolKind.ES,
    ) -> "StarConfig":
        """Build an ES/MS configuration from alpha_t; alpha_r = 1 - alpha_t."""
        alpha = np.clip(np.asarray(alpha_t, dtype=float), 0.0, 1.0)
        return cls(
            protocol=protocol,
            amp_t=np.sqrt(alpha),
            amp_r=np.sqrt(1.0 - alpha),
            phase_t=wrap_phase(phase_t),
            phase_r=wrap_phase(phase_r),
        )

    @classmethod
    def time_split(cls, phase_t: np.ndarray, phase_r: np.ndarray, tau_t: float) -> "StarConfig":
        """Build a TS configuration: unit amplitudes, time share tau_t for the T user."""
        ones = np.ones(np.asarray(phase_t).size)
        return cls(
            protocol=ProtocolKind.TS,
            amp_t=ones,
            amp_r=ones.copy(),
            phase_t=wrap_phase(phase_t),
            phase_r=wrap_phase(phase_r),
            tau_t=float(tau_t),
            tau_r=float(1.0 - tau_t),
        )

    @classmethod
    def uniform(cls, protocol: ProtocolKind, m_elements: int) -> "StarConfig":
        """Zero phases with equal energy split (ES/MS) or equal time split (TS)."""
        zeros = np.zeros(m_elements)
        if protocol is ProtocolKind.TS:
            return cls.time_split(zeros, zeros, 0.5)
        return cls.energy_split(np.full(m_elements, 0.5), zeros, zeros, protocol=protocol)


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    """Transmit precoders of both users.

    With shared=True both fields hold the same broadcast precoder and its
    power is counted once. multiplier is the power-constraint multiplier
    found by the dual solver (0 when the budget is inactive).
    """

    w_t: np.ndarray
    w_r: np.ndarray
    shared: bool = False
    multiplier: float = 0.0

    def __post_init__(self) -> None:
        w_t = np.asarray(self.w_t, dtype=complex)
        w_r = w_t if self.shared else np.asarray(self.w_r, dtype=complex)
        if w_t.ndim != 2 or w_r.ndim != 2 or w_t.shape[0] != w_r.shape[0]:
            raise DomainError(f"precoders must be N x N_d matrices, got {w_t.shape}, {w_r.shape}")
        object.__setattr__(self, "w_t", w_t)
        object.__setattr__(self, "w_r", w_r)

    def user(self, side: str) -> np.ndarray:
        return (self.w_t, self.w_r)[_side_index(side)]

    def power(self, tau: Optional[Tuple[float, float]] = None) -> float:
        """Transmit power sum_l tau_l Tr(W_l W_l^H); a shared precoder counts once."""
        if self.shared:
            return float(np.real(np.vdot(self.w_t, self.w_t)))
        tau_t, tau_r = (1.0, 1.0) if tau is None else tau
        p_t = float(np.real(np.vdot(self.w_t, self.w_t)))
        p_r = float(np.real(np.vdot(self.w_r, self.w_r)))
        return tau_t * p_t + tau_r * p_r

    def mirrored(self) -> "PrecoderSet":
        return replace(self, w_t=self.w_r, w_r=self.w_t)

    @classmethod
    def zeros(cls, n_tx: int, n_streams: Tuple[int, int]) -> "PrecoderSet":
        return cls(
            w_t=np.zeros((n_tx, n_streams[0]), dtype=complex),
            w_r=np.zeros((n_tx, n_streams[1]), dtype=complex),
        )

    @classmethod
    def broadcast(cls, w: np.ndarray, multiplier: float = 0.0) -> "PrecoderSet":
        return cls(w_t=w, w_r=w, shared=True, multiplier=multiplier)


@dataclass(frozen=True)
class SystemSpec:
    """Antenna counts, weights, power budget and traffic mode of one system."""

    n_tx: int = N_TX
    n_user_t: int = N_USER_T
    n_user_r: int = N_USER_R
    n_streams: Tuple[int, int] = N_STREAMS
    m_elements: int = M_ELEMENTS_DESK
    weights: Tuple[float, float] = WEIGHTS
    power_budget: float = dbm_to_watts(POWER_BUDGET_DBM)
    noise_power: float = dbm_to_watts(NOISE_POWER_DBM)
    traffic: Traffic = Traffic.UNICAST

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_streams", tuple(int(n) for n in self.n_streams))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        violations = self.violations()
        if violations:
            raise DomainError("; ".join(str(v) for v in violations))

    def violations(self) -> List[Violation]:
        found: List[Violation] = []
        for name in ("n_tx", "n_user_t", "n_user_r", "m_elements"):
            if getattr(self, name) < 1:
                found.append(Violation(name, f"must be >= 1, got {getattr(self, name)}"))
        if len(self.n_streams) != 2 or min(self.n_streams) < 1:
            found.append(Violation("n_streams", f"need two counts >= 1, got {self.n_streams}"))
        if len(self.weights) != 2 or any(not 0.0 <= w <= 1.0 for w in self.weights):
            found.append(Violation("weights", f"need two weights in [0, 1], got {self.weights}"))
        else:
            gap = abs(sum(self.weights) - 1.0)
            if gap > WEIGHT_SUM_TOL:
                found.append(Violation("weights", "weights must sum to 1", gap))
        if not self.power_budget > 0.0:
            found.append(Violation("power_budget", f"must be > 0, got {self.power_budget}"))
        if not self.noise_power > 0.0:
            found.append(Violation("noise_power", f"must be > 0, got {self.noise_power}"))
        return found

    def weight(self, side: str) -> float:
        return self.weights[_side_index(side)]

    def n_user(self, side: str) -> int:
        return (self.n_user_t, self.n_user_r)[_side_index(side)]

    def streams(self, side: str) -> int:
        return self.n_streams[_side_index(side)]

    @property
    def broadcast_streams(self) -> int:
        return max(self.n_streams)

    @property
    def is_broadcast(self) -> bool:
        return self.traffic is Traffic.BROADCAST

    def antenna_counts(self) -> AntennaCounts:
        return AntennaCounts(
            n_tx=self.n_tx,
            m_elements=self.m_elements,
            n_user_t=self.n_user_t,
            n_user_r=self.n_user_r,
        )

    def mirrored(self) -> "SystemSpec":
        """Swap the roles of the two users."""
        return replace(
            self,
            n_user_t=self.n_user_r,
            n_user_r=self.n_user_t,
            n_streams=(self.n_streams[1], self.n_streams[0]),
            weights=(self.weights[1], self.weights[0]),
        )


@dataclass(frozen=True, eq=False)
class UserLink:
    """Everything needed to evaluate one user's rate.

    interferer is None when the user sees no inter-user interference
    (TS slots and broadcast).
    """

    side: str
    h_bar: np.ndarray
    w: np.ndarray
    interferer: Optional[np.ndarray]
    weight: float
    tau: float
    noise: float


def effective_channel(h_l: np.ndarray, star: StarConfig, side: str, f: np.ndarray) -> np.ndarray:
    """H_bar_l = H_l Diag(sqrt(alpha_l) * exp(j*phi_l)) F."""
    coeff = star.coefficients(side)
    if h_l.shape[1] != coeff.size or f.shape[0] != coeff.size:
        raise DomainError(
            f"dimension mismatch: H {h_l.shape}, {coeff.size} elements, F {f.shape}"
        )
    return (h_l * coeff[np.newaxis, :]) @ f


def interference_covariance(
    h_bar_l: np.ndarray, w_other: Optional[np.ndarray], noise: float
) -> np.ndarray:
    """C_l = H_bar_l W_l' W_l'^H H_bar_l^H + sigma^2 I (noise only without interferer)."""
    if not noise > 0.0:
        raise DomainError(f"noise power must be > 0, got {noise}")
    cov = noise * np.eye(h_bar_l.shape[0], dtype=complex)
    if w_other is not None:
        if w_other.shape[0] != h_bar_l.shape[1]:
            raise DomainError(f"interferer precoder {w_other.shape} does not match {h_bar_l.shape}")
        leak = h_bar_l @ w_other
        cov = cov + leak @ leak.conj().T
    return cov


def rate_unicast(
    h_bar_l: np.ndarray,
    w_l: np.ndarray,
    w_other: Optional[np.ndarray],
    noise: float,
) -> float:
    """log2 det(I + H_bar W W^H H_bar^H C^-1) in bits/s/Hz."""
    if w_l.shape[0] != h_bar_l.shape[1]:
        raise DomainError(f"precoder {w_l.shape} does not match channel {h_bar_l.shape}")
    cov = interference_covariance(h_bar_l, w_other, noise)
    signal = h_bar_l @ w_l
    try:
        rate = log2det_pd(cov + signal @ signal.conj().T, "signal covariance") - log2det_pd(
            cov, "interference covariance"
        )
    except NumericalError as exc:
        raise NumericalError(f"rate evaluation failed: {exc}") from exc
    if rate < -NEGATIVE_RATE_TOL:
        raise NumericalError(f"rate evaluation failed: negative rate {rate:.3e} bits/s/Hz")
    # rounding below zero only
    return max(rate, 0.0)


def rate_ts(h_bar_l: np.ndarray, w_l: np.ndarray, noise: float, tau_l: float) -> float:
    """tau_l * log2 det(I + sigma^-2 H_bar W W^H H_bar^H)."""
    if not 0.0 <= tau_l <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau_l}")
    if tau_l == 0.0:
        return 0.0
    return tau_l * rate_unicast(h_bar_l, w_l, None, noise)


def rate_broadcast(h_bar_l: np.ndarray, w: np.ndarray, noise: float) -> float:
    """Rate of one user decoding the common stream of a shared precoder."""
    return rate_unicast(h_bar_l, w, None, noise)


def user_links(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    star: StarConfig,
) -> Tuple[UserLink, UserLink]:
    """Effective channels, precoders and interference pattern of both users."""
    if star.m_elements != channels.m_elements:
        raise DomainError(
            f"configuration has {star.m_elements} elements, channels {channels.m_elements}"
        )
    time_split = star.protocol is ProtocolKind.TS
    links = []
    for side, other in (("t", "r"), ("r", "t")):
        interferer = None
        if not time_split and not precoders.shared:
            interferer = precoders.user(other)
        links.append(
            UserLink(
                side=side,
                h_bar=effective_channel(channels.user(side), star, side, channels.f),
                w=precoders.user(side),
                interferer=interferer,
                weight=spec.weight(side),
                tau=star.tau(side) if time_split else 1.0,
                noise=spec.noise_power,
            )
        )
    return links[0], links[1]


def link_rate(link: UserLink) -> float:
    if link.interferer is None:
        return rate_ts(link.h_bar, link.w, link.noise, link.tau)
    return rate_unicast(link.h_bar, link.w, link.interferer, link.noise)


def user_rates(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    star: StarConfig,
) -> Tuple[float, float]:
    """(R_t, R_r) with the protocol- and traffic-appropriate rate expressions."""
    link_t, link_r = user_links(spec, channels, precoders, star)
    return link_rate(link_t), link_rate(link_r)


def validate(star: StarConfig, spec: SystemSpec) -> List[Violation]:
    """List every violated protocol constraint of a configuration (empty when valid)."""
    found: List[Violation] = []
    if star.m_elements != spec.m_elements:
        found.append(
            Violation("m_elements", f"{star.m_elements} elements, expected {spec.m_elements}")
        )
    for side in SIDES:
        phase = star.phase(side)
        if not np.all(np.isfinite(phase)) or np.any(phase < 0.0) or np.any(phase >= TWO_PI):
            found.append(Violation(f"phase_{side}", "phases must lie in [0, 2*pi)"))
    alpha_t, alpha_r = star.alpha("t"), star.alpha("r")

    if star.protocol is ProtocolKind.TS:
        amp_gap = float(max(np.max(np.abs(star.amp_t - 1.0)), np.max(np.abs(star.amp_r - 1.0))))
        if amp_gap > UNIT_MODULUS_TOL:
            found.append(Violation("unit_modulus", "TS amplitudes must all equal 1", amp_gap))
        tau_gap = abs(star.tau_t + star.tau_r - 1.0)
        if tau_gap > ENERGY_TOL:
            found.append(Violation("time_split", "tau_t + tau_r must equal 1", tau_gap))
        for side in SIDES:
            tau = star.tau(side)
            if tau < -ENERGY_TOL or tau > 1.0 + ENERGY_TOL:
                found.append(Violation(f"tau_{side}", f"must lie in [0, 1], got {tau}"))
        return found

    energy_gap = float(np.max(np.abs(alpha_t + alpha_r - 1.0)))
    if energy_gap > ENERGY_TOL:
        found.append(Violation("energy", "alpha_t + alpha_r must equal 1 per element", energy_gap))
    for side, alpha in (("t", alpha_t), ("r", alpha_r)):
        overshoot = float(max(np.max(-alpha), np.max(alpha - 1.0), 0.0))
        if overshoot > ENERGY_TOL:
            found.append(Violation(f"alpha_{side}", "amplitudes must lie in [0, 1]", overshoot))
    if star.protocol is ProtocolKind.MS:
        distance = float(np.max(np.minimum(alpha_t, 1.0 - alpha_t)))
        if distance > BINARY_TOL:
            found.append(Violation("binary", "MS amplitudes must be 0 or 1", distance))
    return found


def validate_precoders(
    precoders: PrecoderSet, spec: SystemSpec, star: StarConfig
) -> List[Violation]:
    """Power-budget and shape checks of a precoder set."""
    found: List[Violation] = []
    for side in SIDES:
        w = precoders.user(side)
        if w.shape[0] != spec.n_tx:
            found.append(Violation(f"w_{side}", f"has {w.shape[0]} rows, expected {spec.n_tx}"))
    if precoders.shared != spec.is_broadcast and star.protocol is not ProtocolKind.TS:
        found.append(Violation("traffic", "shared precoder iff broadcast ES/MS"))
    if star.protocol is ProtocolKind.TS:
        power = precoders.power((star.tau_t, star.tau_r))
    else:
        power = precoders.power()
    excess = power - spec.power_budget * (1.0 + POWER_REL_TOL)
    if excess > 0.0:
        found.append(Violation("power", f"{power:.6e} W exceeds {spec.power_budget:.6e} W", excess))
    return found


def wsr(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    star: StarConfig,
) -> float:
    """Weighted sum rate sum_l w_l R_l.

    Raises:
        ValidationError: if the configuration or the precoders violate a constraint
    """
    violations = validate(star, spec) + validate_precoders(precoders, spec, star)
    if violations:
        raise ValidationError(violations)
    rate_t, rate_r = user_rates(spec, channels, precoders, star)
    return spec.weights[0] * rate_t + spec.weights[1] * rate_r
