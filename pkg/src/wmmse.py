"""WMMSE reformulation: MSE matrices, optimal decoders and weights, and the surrogate objective.

The weighted sum rate is maximised through the equivalent problem

    max  sum_l w_l (log det V_l - Tr(V_l E_l) + d_l)

whose maximisers over U_l and V_l are available in closed form. With
d_l = N_d_l the surrogate equals the WSR at (U*, V*).
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.channel import ChannelSet
from src.config import HERMITIAN_TOL
from src.errors import DomainError, NumericalError
from src.linalg import hermitian_defect, hermitize, inv_pd, logdet_pd
from src.model import (
    PrecoderSet,
    StarConfig,
    SystemSpec,
    UserLink,
    interference_covariance,
    user_links,
)


@dataclass(frozen=True, eq=False)
class WmmseState:
    """Decoder matrices U_l, weight matrices V_l and surrogate constants d_l of both users."""

    u: Tuple[np.ndarray, np.ndarray]
    v: Tuple[np.ndarray, np.ndarray]
    d: Tuple[float, float]

    def __post_init__(self) -> None:
        for idx, v_l in enumerate(self.v):
            if hermitian_defect(v_l) > HERMITIAN_TOL:
                raise DomainError(f"weight matrix {idx} is not Hermitian")

    def user(self, side: str) -> Tuple[np.ndarray, np.ndarray]:
        """(U_l, V_l) of side 't' or 'r'."""
        idx = 0 if side == "t" else 1
        return self.u[idx], self.v[idx]


def mse_matrix(
    h_bar_l: np.ndarray,
    w_l: np.ndarray,
    w_other: Optional[np.ndarray],
    u_l: np.ndarray,
    noise: float,
) -> np.ndarray:
    """E_l = (U^H H W - I)(U^H H W - I)^H + U^H H W' W'^H H^H U + sigma^2 U^H U.

    The interference term is dropped when w_other is None. noise may be 0
    here (only the closed-form checks use that).
    """
    if u_l.shape[0] != h_bar_l.shape[0] or w_l.shape[0] != h_bar_l.shape[1]:
        raise DomainError(
            f"dimension mismatch: U {u_l.shape}, H {h_bar_l.shape}, W {w_l.shape}"
        )
    if u_l.shape[1] != w_l.shape[1]:
        raise DomainError(f"decoder has {u_l.shape[1]} streams, precoder {w_l.shape[1]}")
    u_h = u_l.conj().T
    error = u_h @ h_bar_l @ w_l - np.eye(w_l.shape[1])
    mse = error @ error.conj().T + noise * (u_h @ u_l)
    if w_other is not None:
        leak = u_h @ h_bar_l @ w_other
        mse = mse + leak @ leak.conj().T
    return hermitize(mse)


def optimal_decoder(h_bar_l: np.ndarray, w_l: np.ndarray, c_l: np.ndarray) -> np.ndarray:
    """U* = (H W W^H H^H + C)^-1 H W."""
    signal = h_bar_l @ w_l
    total = hermitize(signal @ signal.conj().T + c_l)
    try:
        factor = scipy.linalg.cho_factor(total, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("receive covariance is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, signal)


def optimal_weight(e_star: np.ndarray) -> np.ndarray:
    """V* = (E*)^-1, Hermitian-symmetrized.

    Raises:
        NumericalError: if E* is not positive definite or its condition exceeds 1e12
    """
    return inv_pd(e_star, name="MSE matrix")


def surrogate(state: WmmseState, mse: Sequence[np.ndarray], weights: Sequence[float]) -> float:
    """sum_l w_l (ln det V_l - Tr(V_l E_l) + d_l) / ln 2, in bits/s/Hz."""
    total = 0.0
    for v_l, e_l, d_l, w_l in zip(state.v, mse, state.d, weights):
        try:
            logdet = logdet_pd(v_l, "weight matrix")
        except NumericalError as exc:
            raise DomainError(f"weight matrix must be positive definite: {exc}") from exc
        total += w_l * (logdet - float(np.real(np.trace(v_l @ e_l))) + d_l)
    return total / math.log(2.0)


def decoder_and_weight(link: UserLink) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(U*, E*, V*) of one user at its current precoders and channel."""
    cov = interference_covariance(link.h_bar, link.interferer, link.noise)
    u_star = optimal_decoder(link.h_bar, link.w, cov)
    e_star = mse_matrix(link.h_bar, link.w, link.interferer, u_star, link.noise)
    return u_star, e_star, optimal_weight(e_star)


def update_state(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    star: StarConfig,
) -> WmmseState:
    """Closed-form (U, V) block update of the BCD loop."""
    us, vs, ds = [], [], []
    for link in user_links(spec, channels, precoders, star):
        u_star, _, v_star = decoder_and_weight(link)
        us.append(u_star)
        vs.append(v_star)
        ds.append(float(link.w.shape[1]))
    return WmmseState(u=(us[0], us[1]), v=(vs[0], vs[1]), d=(ds[0], ds[1]))


def current_mse(
    spec: SystemSpec,
    channels: ChannelSet,
    precoders: PrecoderSet,
    star: StarConfig,
    state: WmmseState,
) -> Tuple[np.ndarray, np.ndarray]:
    """E_l of both users for fixed decoders."""
    e_t, e_r = (
        mse_matrix(link.h_bar, link.w, link.interferer, state.u[idx], link.noise)
        for idx, link in enumerate(user_links(spec, channels, precoders, star))
    )
    return e_t, e_r


def surrogate_weights(
    spec: SystemSpec, channels: ChannelSet, precoders: PrecoderSet, star: StarConfig
) -> Tuple[float, float]:
    """Per-user surrogate weights w_l * tau_l (tau_l = 1 outside TS)."""
    link_t, link_r = user_links(spec, channels, precoders, star)
    return link_t.weight * link_t.tau, link_r.weight * link_r.tau
