"""Precoder subproblem: Lagrange dual method with bisection on the power multiplier."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.channel import ChannelSet
from src.config import (
    BISECTION_DOUBLINGS,
    BISECTION_MAX_ITER,
    BISECTION_REL_TOL,
    BISECTION_START,
    HERMITIAN_TOL,
)
from src.errors import DomainError, NumericalError
from src.linalg import hermitian_defect, hermitize, min_eigenvalue
from src.model import (
    PrecoderSet,
    ProtocolKind,
    StarConfig,
    SystemSpec,
    effective_channel,
)
from src.wmmse import WmmseState

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PrecoderBlock:
    """One term tau * (Tr(W^H A W) - 2 Re Tr(B W)) of the precoder objective.

    sides lists the users served by this block's precoder; a broadcast
    block serves both.
    """

    a: np.ndarray
    b: np.ndarray
    tau: float
    sides: Tuple[str, ...]

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=complex)
        b = np.asarray(self.b, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[1] != a.shape[0]:
            raise DomainError(f"block shapes A {a.shape}, B {b.shape} are inconsistent")
        if hermitian_defect(a) > HERMITIAN_TOL:
            raise DomainError("A must be Hermitian")
        a = hermitize(a)
        scale = max(1.0, float(np.linalg.norm(a, 2)))
        if min_eigenvalue(a) < -HERMITIAN_TOL * scale:
            raise DomainError("A must be positive semidefinite")
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"time weight must lie in [0, 1], got {self.tau}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class QuadraticPrecoderProblem:
    """Power-constrained quadratic precoder problem.

    min sum_k tau_k (Tr(W_k^H A_k W_k) - 2 Re Tr(B_k W_k))
    s.t. sum_k tau_k ||W_k||_F^2 <= P_s
    """

    blocks: Tuple[PrecoderBlock, ...]
    power_budget: float

    def __post_init__(self) -> None:
        if not self.power_budget > 0.0:
            raise DomainError(f"power budget must be > 0, got {self.power_budget}")
        if not self.blocks:
            raise DomainError("precoder problem needs at least one block")

    @property
    def is_broadcast(self) -> bool:
        return len(self.blocks) == 1 and len(self.blocks[0].sides) == 2


class _Spectral:
    """Eigendecomposition A = Q diag(lam) Q^H with G = Q^H B^H, for fast W(lambda)."""

    def __init__(self, block: PrecoderBlock) -> None:
        eigvals, eigvecs = scipy.linalg.eigh(block.a)
        self.eigvals = np.clip(eigvals, 0.0, None)
        self.eigvecs = eigvecs
        self.rotated = eigvecs.conj().T @ block.b.conj().T
        self.row_energy = np.sum(np.abs(self.rotated) ** 2, axis=1)
        self.tau = block.tau

    def precoder(self, lam: float) -> np.ndarray:
        denom = self.eigvals + lam
        if lam > 0.0:
            return self.eigvecs @ (self.rotated / denom[:, np.newaxis])
        # pseudo-inverse on the range of A
        safe = np.where(self._null_mask(), np.inf, denom)
        return self.eigvecs @ (self.rotated / safe[:, np.newaxis])

    def power(self, lam: float) -> float:
        denom = self.eigvals + lam
        if lam > 0.0:
            return float(self.tau * np.sum(self.row_energy / denom**2))
        active = ~self._null_mask()
        return float(self.tau * np.sum(self.row_energy[active] / denom[active] ** 2))

    def unbounded_at_zero(self) -> bool:
        """True when B has a component in the null space of A (power diverges as lambda -> 0)."""
        null = self._null_mask()
        total = float(np.sum(self.row_energy))
        leaked = float(np.sum(self.row_energy[null]))
        return bool(np.any(null)) and leaked > 1e-24 * max(total, 1e-300)

    def _null_mask(self) -> np.ndarray:
        top = float(self.eigvals[-1]) if self.eigvals.size else 0.0
        return self.eigvals <= 1e-12 * top if top > 0.0 else np.ones(self.eigvals.size, bool)


def assemble(
    spec: SystemSpec,
    channels: ChannelSet,
    star: StarConfig,
    state: WmmseState,
) -> QuadraticPrecoderProblem:
    """Build the quadratic precoder problem from the current WMMSE state.

    A_l = w_l H_bar^H U V U^H H_bar and B_l = w_l V U^H H_bar. ES/MS unicast
    shares A = A_t + A_r across two blocks; TS keeps A_l per user with its
    time share; broadcast ES/MS merges both users into one block.
    """
    terms: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for side in ("t", "r"):
        u_l, v_l = state.user(side)
        h_bar = effective_channel(channels.user(side), star, side, channels.f)
        if u_l.shape[0] != h_bar.shape[0]:
            raise DomainError(f"decoder {u_l.shape} does not match channel {h_bar.shape}")
        weight = spec.weight(side)
        proj = u_l.conj().T @ h_bar  # U^H H_bar
        a_l = weight * (proj.conj().T @ v_l @ proj)
        b_l = weight * (v_l @ proj)
        terms[side] = (hermitize(a_l), b_l)

    (a_t, b_t), (a_r, b_r) = terms["t"], terms["r"]
    if star.protocol is ProtocolKind.TS:
        blocks = (
            PrecoderBlock(a_t, b_t, star.tau_t, ("t",)),
            PrecoderBlock(a_r, b_r, star.tau_r, ("r",)),
        )
    elif spec.is_broadcast:
        blocks = (PrecoderBlock(a_t + a_r, b_t + b_r, 1.0, ("t", "r")),)
    else:
        a = a_t + a_r
        blocks = (PrecoderBlock(a, b_t, 1.0, ("t",)), PrecoderBlock(a, b_r, 1.0, ("r",)))
    return QuadraticPrecoderProblem(blocks=blocks, power_budget=spec.power_budget)


def objective(problem: QuadraticPrecoderProblem, precoders: Sequence[np.ndarray]) -> float:
    """Value of sum_k tau_k (Tr(W_k^H A_k W_k) - 2 Re Tr(B_k W_k)) for one W per block."""
    total = 0.0
    for block, w in zip(problem.blocks, precoders):
        quad = np.real(np.trace(w.conj().T @ block.a @ w))
        lin = np.real(np.trace(block.b @ w))
        total += block.tau * float(quad - 2.0 * lin)
    return total


def block_precoders(precoders: PrecoderSet, problem: QuadraticPrecoderProblem) -> List[np.ndarray]:
    """The W of each block, in block order."""
    return [precoders.user(block.sides[0]) for block in problem.blocks]


def _to_precoder_set(
    problem: QuadraticPrecoderProblem, ws: List[np.ndarray], lam: float
) -> PrecoderSet:
    if problem.is_broadcast:
        return PrecoderSet.broadcast(ws[0], multiplier=lam)
    by_side = {block.sides[0]: w for block, w in zip(problem.blocks, ws)}
    return PrecoderSet(w_t=by_side["t"], w_r=by_side["r"], multiplier=lam)


def solve_dual(problem: QuadraticPrecoderProblem) -> PrecoderSet:
    """Minimise the precoder objective under the (time-weighted) power budget.

    W_k = (A_k + lambda I)^-1 B_k^H, with lambda = 0 when the unconstrained
    (pseudo-inverse) solution fits the budget and otherwise the unique
    lambda > 0 that meets it, found by bracket doubling and bisection.

    Raises:
        NumericalError: if no bracket is found after the doubling budget
    """
    budget = problem.power_budget
    spectra = [_Spectral(block) if block.tau > 0.0 else None for block in problem.blocks]
    active = [s for s in spectra if s is not None]

    def power(lam: float) -> float:
        return sum(s.power(lam) for s in active)

    def precoders(lam: float) -> List[np.ndarray]:
        return [
            s.precoder(lam) if s is not None else np.zeros((block.a.shape[0], block.b.shape[0]))
            for s, block in zip(spectra, problem.blocks)
        ]

    if not any(s.unbounded_at_zero() for s in active) and power(0.0) <= budget:
        logger.debug("power budget inactive: lambda = 0, power = %.4e W", power(0.0))
        return _to_precoder_set(problem, precoders(0.0), 0.0)

    energy = sum(s.tau * float(np.sum(s.row_energy)) for s in active)
    top = max((float(s.eigvals[-1]) for s in active if s.eigvals.size), default=0.0)
    scale = max(np.sqrt(energy / budget), top)
    lo, hi = 0.0, BISECTION_START * scale
    for _ in range(BISECTION_DOUBLINGS):
        if power(hi) <= budget:
            break
        lo, hi = hi, 2.0 * hi
    else:
        if power(hi) > budget:
            raise NumericalError(
                f"no power-multiplier bracket after {BISECTION_DOUBLINGS} doublings "
                f"(lambda={hi:.3e})"
            )

    iterations = 0
    while iterations < BISECTION_MAX_ITER:
        if (budget - power(hi)) <= BISECTION_REL_TOL * budget or hi - lo <= 1e-16 * hi:
            break
        mid = 0.5 * (lo + hi)
        if power(mid) > budget:
            lo = mid
        else:
            hi = mid
        iterations += 1
    else:
        logger.warning("power bisection hit %d iterations", BISECTION_MAX_ITER)

    logger.debug(
        "power multiplier lambda=%.6e after %d bisections, power=%.6e W", hi, iterations, power(hi)
    )
    return _to_precoder_set(problem, precoders(hi), hi)


def initial_precoders(spec: SystemSpec, channels: ChannelSet, star: StarConfig) -> PrecoderSet:
    """Dominant right singular vectors of each effective channel with equal power split."""
    h_t = effective_channel(channels.h_t, star, "t", channels.f)
    h_r = effective_channel(channels.h_r, star, "r", channels.f)

    def dominant(h_bar: np.ndarray, streams: int, power: float) -> np.ndarray:
        _, _, vh = np.linalg.svd(h_bar)
        basis = vh.conj().T[:, :streams]
        if basis.shape[1] < streams:
            basis = np.pad(basis, ((0, 0), (0, streams - basis.shape[1])))
        return np.sqrt(power / streams) * basis

    if spec.is_broadcast and star.protocol is not ProtocolKind.TS:
        w = dominant(np.vstack([h_t, h_r]), spec.broadcast_streams, spec.power_budget)
        return PrecoderSet.broadcast(w)
    # under TS each user's power is weighted by its time share, so each may use P_s
    share = spec.power_budget if star.protocol is ProtocolKind.TS else 0.5 * spec.power_budget
    return PrecoderSet(
        w_t=dominant(h_t, spec.streams("t"), share),
        w_r=dominant(h_r, spec.streams("r"), share),
    )
