"""Channel module: scenario geometry, path loss and Rician-faded channel matrices."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.config import (
    HALF_CIRCLE_RADIUS,
    NOISE_POWER_DBM,
    PATHLOSS_EXPONENT,
    PATHLOSS_REF_GAIN,
    REFERENCE_DISTANCE,
    RICIAN_K_DB,
    RIS_POSITION,
    TX_POSITION,
    USER_HEIGHT,
    db_to_linear,
    dbm_to_watts,
)
from src.errors import DomainError

logger = logging.getLogger(__name__)


def _as_point(value: object, name: str) -> np.ndarray:
    point = np.asarray(value, dtype=float).reshape(-1)
    if point.shape != (3,) or not np.all(np.isfinite(point)):
        raise DomainError(f"{name} must be a finite 3-vector, got {value!r}")
    return point


@dataclass(frozen=True, eq=False)
class ScenarioGeometry:
    """Node positions of the single-cell STAR-RIS scenario.

    The RIS lies in the plane y = ris_position[1]. The transmitter sits on the
    reflection side (y below the plane); the T user is behind the panel
    (transmission half-space) and the R user in front of it.
    """

    tx_position: np.ndarray
    ris_position: np.ndarray
    user_positions: Tuple[np.ndarray, np.ndarray]  # (T user, R user)
    half_circle_radius: float = HALF_CIRCLE_RADIUS
    user_height: float = USER_HEIGHT

    def __post_init__(self) -> None:
        object.__setattr__(self, "tx_position", _as_point(self.tx_position, "tx_position"))
        object.__setattr__(self, "ris_position", _as_point(self.ris_position, "ris_position"))
        t_user, r_user = self.user_positions
        object.__setattr__(
            self,
            "user_positions",
            (_as_point(t_user, "t_user_position"), _as_point(r_user, "r_user_position")),
        )
        self._check()

    def _check(self) -> None:
        plane_y = self.ris_position[1]
        t_user, r_user = self.user_positions
        if not t_user[1] > plane_y:
            raise DomainError("T user must lie in the transmission half-space of the RIS")
        if not r_user[1] < plane_y:
            raise DomainError("R user must lie in the reflection half-space of the RIS")
        nodes = {
            "tx": self.tx_position,
            "ris": self.ris_position,
            "t_user": t_user,
            "r_user": r_user,
        }
        names = list(nodes)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                if np.linalg.norm(nodes[a] - nodes[b]) <= 0.0:
                    raise DomainError(f"nodes {a} and {b} coincide")

    @property
    def t_user(self) -> np.ndarray:
        return self.user_positions[0]

    @property
    def r_user(self) -> np.ndarray:
        return self.user_positions[1]

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """Euclidean distance between two node positions."""
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))

    @classmethod
    def on_half_circles(
        cls,
        t_azimuth: float,
        r_azimuth: float,
        tx_position: Tuple[float, float, float] = TX_POSITION,
        ris_position: Tuple[float, float, float] = RIS_POSITION,
        radius: float = HALF_CIRCLE_RADIUS,
        user_height: float = USER_HEIGHT,
    ) -> "ScenarioGeometry":
        """Place both users on the half-circles around the RIS.

        Args:
            t_azimuth: Angle in (0, pi) of the T user on its half-circle (radians)
            r_azimuth: Angle in (0, pi) of the R user on its half-circle (radians)
        """
        ris = np.asarray(ris_position, dtype=float)
        t_user = (
            ris[0] + radius * math.cos(t_azimuth),
            ris[1] + radius * math.sin(t_azimuth),
            user_height,
        )
        r_user = (
            ris[0] + radius * math.cos(r_azimuth),
            ris[1] - radius * math.sin(r_azimuth),
            user_height,
        )
        return cls(
            tx_position=np.asarray(tx_position, dtype=float),
            ris_position=ris,
            user_positions=(np.asarray(t_user), np.asarray(r_user)),
            half_circle_radius=radius,
            user_height=user_height,
        )

    @classmethod
    def sample(
        cls,
        rng: np.random.Generator,
        t_azimuth: Optional[float] = None,
        r_azimuth: Optional[float] = None,
        **kwargs: object,
    ) -> "ScenarioGeometry":
        """Draw user azimuths uniformly on their half-circles unless pinned."""
        t_angle = float(rng.uniform(0.0, math.pi)) if t_azimuth is None else t_azimuth
        r_angle = float(rng.uniform(0.0, math.pi)) if r_azimuth is None else r_azimuth
        return cls.on_half_circles(t_angle, r_angle, **kwargs)  # type: ignore[arg-type]


@dataclass(frozen=True)
class FadingParams:
    """Large- and small-scale fading parameters (linear units, watts)."""

    rician_k: float = field(default_factory=lambda: db_to_linear(RICIAN_K_DB))
    pathloss_exponent_ris: float = PATHLOSS_EXPONENT
    pathloss_ref_gain: float = PATHLOSS_REF_GAIN
    noise_power: float = field(default_factory=lambda: dbm_to_watts(NOISE_POWER_DBM))

    def __post_init__(self) -> None:
        if not self.rician_k >= 0.0:
            raise DomainError(f"rician_k must be >= 0, got {self.rician_k}")
        if not self.pathloss_exponent_ris > 0.0:
            raise DomainError(f"pathloss exponent must be > 0, got {self.pathloss_exponent_ris}")
        if not self.pathloss_ref_gain > 0.0:
            raise DomainError(f"pathloss reference gain must be > 0, got {self.pathloss_ref_gain}")
        if not self.noise_power > 0.0:
            raise DomainError(f"noise power must be > 0, got {self.noise_power}")

    @classmethod
    def from_db(
        cls,
        rician_k_db: float = RICIAN_K_DB,
        noise_power_dbm: float = NOISE_POWER_DBM,
        pathloss_exponent_ris: float = PATHLOSS_EXPONENT,
        pathloss_ref_gain: float = PATHLOSS_REF_GAIN,
    ) -> "FadingParams":
        """Build parameters from the dB/dBm values used in configuration files."""
        return cls(
            rician_k=db_to_linear(rician_k_db),
            pathloss_exponent_ris=pathloss_exponent_ris,
            pathloss_ref_gain=pathloss_ref_gain,
            noise_power=dbm_to_watts(noise_power_dbm),
        )


@dataclass(frozen=True)
class AntennaCounts:
    """Array sizes of the four nodes."""

    n_tx: int
    m_elements: int
    n_user_t: int
    n_user_r: int

    def __post_init__(self) -> None:
        for name in ("n_tx", "m_elements", "n_user_t", "n_user_r"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Propagation matrices F (M x N), H_t (N_t x M) and H_r (N_r x M)."""

    f: np.ndarray
    h_t: np.ndarray
    h_r: np.ndarray

    def __post_init__(self) -> None:
        m = self.f.shape[0]
        if self.f.ndim != 2 or self.h_t.ndim != 2 or self.h_r.ndim != 2:
            raise DomainError("channel matrices must be two-dimensional")
        if self.h_t.shape[1] != m or self.h_r.shape[1] != m:
            raise DomainError(
                f"inconsistent RIS dimension: F {self.f.shape}, "
                f"H_t {self.h_t.shape}, H_r {self.h_r.shape}"
            )
        for name in ("f", "h_t", "h_r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"channel {name} has non-finite entries")

    @property
    def m_elements(self) -> int:
        return int(self.f.shape[0])

    @property
    def n_tx(self) -> int:
        return int(self.f.shape[1])

    def user(self, side: str) -> np.ndarray:
        """RIS-to-user matrix for side 't' or 'r'."""
        if side == "t":
            return self.h_t
        if side == "r":
            return self.h_r
        raise DomainError(f"unknown side {side!r}")

    def mirrored(self) -> "ChannelSet":
        """Swap the roles of the two users."""
        return ChannelSet(f=self.f, h_t=self.h_r, h_r=self.h_t)

    def fingerprint(self) -> str:
        """Stable SHA-256 digest of the channel coefficients."""
        digest = hashlib.sha256()
        for matrix in (self.f, self.h_t, self.h_r):
            array = np.ascontiguousarray(matrix, dtype=np.complex128)
            digest.update(str(array.shape).encode())
            digest.update(array.tobytes())
        return digest.hexdigest()


def path_loss(distance: float, params: FadingParams) -> float:
    """Distance-dependent gain PL_0 * (d / d_0)^(-beta)."""
    if not distance > 0.0:
        raise DomainError(f"distance must be positive, got {distance}")
    ratio = distance / REFERENCE_DISTANCE
    return float(params.pathloss_ref_gain * ratio ** (-params.pathloss_exponent_ris))


def steering_vector(n_elements: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response: k-th entry exp(j*pi*(k-1)*sin(angle))."""
    if n_elements < 1:
        raise DomainError(f"n_elements must be >= 1, got {n_elements}")
    k = np.arange(n_elements)
    return np.exp(1j * math.pi * k * math.sin(angle))


def sample_rician(
    rows: int,
    cols: int,
    lhs_steering: np.ndarray,
    rhs_steering: np.ndarray,
    k: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw sqrt(k/(k+1)) a b^H + sqrt(1/(k+1)) G with G ~ CN(0, 1) entries."""
    a = np.asarray(lhs_steering, dtype=complex).reshape(-1)
    b = np.asarray(rhs_steering, dtype=complex).reshape(-1)
    if a.size != rows or b.size != cols:
        raise DomainError(
            f"steering lengths ({a.size}, {b.size}) do not match channel shape ({rows}, {cols})"
        )
    if k < 0.0:
        raise DomainError(f"Rician factor must be >= 0, got {k}")
    real = rng.standard_normal((rows, cols))
    imag = rng.standard_normal((rows, cols))
    scatter = (real + 1j * imag) / math.sqrt(2.0)
    los = np.outer(a, b.conj())
    return math.sqrt(k / (k + 1.0)) * los + math.sqrt(1.0 / (k + 1.0)) * scatter


def azimuth(src: np.ndarray, dst: np.ndarray) -> float:
    """Angle of dst seen from src in the horizontal plane, from array broadside (y axis)."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return math.atan2(delta[0], delta[1])


def build_scenario(
    geometry: ScenarioGeometry,
    params: FadingParams,
    antenna_counts: AntennaCounts,
    rng: np.random.Generator,
) -> ChannelSet:
    """Generate F, H_t, H_r for one channel realisation.

    Each link is a Rician draw scaled by sqrt(path loss); steering angles
    follow from the node positions.
    """
    counts = antenna_counts
    tx, ris = geometry.tx_position, geometry.ris_position

    def link(rows: int, cols: int, rx: np.ndarray, tx_node: np.ndarray) -> np.ndarray:
        gain = path_loss(geometry.distance(rx, tx_node), params)
        arrival = steering_vector(rows, azimuth(rx, tx_node))
        departure = steering_vector(cols, azimuth(tx_node, rx))
        return math.sqrt(gain) * sample_rician(rows, cols, arrival, departure, params.rician_k, rng)

    f = link(counts.m_elements, counts.n_tx, ris, tx)
    h_t = link(counts.n_user_t, counts.m_elements, geometry.t_user, ris)
    h_r = link(counts.n_user_r, counts.m_elements, geometry.r_user, ris)
    logger.debug(
        "built channels: d_tx_ris=%.2f m, d_ris_t=%.2f m, d_ris_r=%.2f m",
        geometry.distance(tx, ris),
        geometry.distance(ris, geometry.t_user),
        geometry.distance(ris, geometry.r_user),
    )
    return ChannelSet(f=f, h_t=h_t, h_r=h_r)
