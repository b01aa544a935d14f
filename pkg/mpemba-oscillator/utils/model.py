"""Domain types, bath parameters and constructors for initial states."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_TAIL_TOL = 1e-12
DEFAULT_N_MIN = 64
DEFAULT_N_MAX_CAP = 4096
DEFAULT_HEADROOM = 1.5
NEGATIVE_SLACK = 1e-12
POSITIVITY_SLACK = 1e-10


class TruncationError(ValueError):
    """Raised when a state needs more levels than the truncation cap allows."""


@dataclass(frozen=True)
class BathParams:
    """Bath/oscillator parameters; the single source of all transition rates."""

    gamma: float
    omega0: float
    n_th: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma は正の値である必要があります (gamma={self.gamma})")
        if self.omega0 < 0:
            raise ValueError(f"omega0 は 0 以上である必要があります (omega0={self.omega0})")
        if not self.n_th >= 0:
            raise ValueError(f"n_th は 0 以上である必要があります (n_th={self.n_th})")

    @classmethod
    def from_temperature_ratio(cls, gamma: float, omega0: float, x: float) -> "BathParams":
        """Build from ``x = ħω₀/k_BT`` using the Planck occupation ``1/(e^x - 1)``."""
        if not x > 0:
            raise ValueError(f"温度比 x は正の値である必要があります (x={x})")
        n_th = 0.0 if x > 700 else 1.0 / math.expm1(x)
        return cls(gamma=gamma, omega0=omega0, n_th=n_th)

    @property
    def w_up(self) -> float:
        """Absorption rate ``2γ n_th``."""
        return 2.0 * self.gamma * self.n_th

    @property
    def w_down(self) -> float:
        """Emission rate ``2γ (n_th + 1)``."""
        return 2.0 * self.gamma * (self.n_th + 1.0)

    @property
    def ratio(self) -> float:
        """Geometric ratio ``n_th / (1 + n_th)`` of the thermal law."""
        return self.n_th / (1.0 + self.n_th)


def make_bath(gamma: float, omega0: float, n_th: float) -> BathParams:
    """Return validated bath parameters."""
    return BathParams(gamma=float(gamma), omega0=float(omega0), n_th=float(n_th))


@dataclass(frozen=True)
class TruncationPolicy:
    """How many Fock levels to keep."""

    tail_tol: float = DEFAULT_TAIL_TOL
    n_min: int = DEFAULT_N_MIN
    n_max_cap: int = DEFAULT_N_MAX_CAP
    headroom: float = DEFAULT_HEADROOM

    def __post_init__(self) -> None:
        if not self.tail_tol > 0:
            raise ValueError("tail_tol は正の値である必要があります")
        if self.n_min < 1 or self.n_max_cap < self.n_min:
            raise ValueError("n_min <= n_max_cap を満たす必要があります")
        if self.headroom < 1:
            raise ValueError("headroom は 1 以上である必要があります")

    def clamp(self, n_required: int) -> int:
        """Raise ``n_required`` to ``n_min``; fail if it exceeds ``n_max_cap``."""
        n = max(int(n_required), self.n_min)
        if n > self.n_max_cap:
            raise TruncationError(
                f"必要な準位数 {n} が上限 n_max_cap={self.n_max_cap} を超えています"
            )
        return n

    def run_size(self, n_required: int) -> int:
        """Truncation used for a run: required size plus headroom, within the cap."""
        n = self.clamp(n_required)
        return min(int(math.ceil(self.headroom * n)), self.n_max_cap)


def _freeze(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class PopulationState:
    """Truncated occupation probabilities ``P_n`` for ``n = 0..N-1``."""

    probs: np.ndarray
    tail_tol: float = DEFAULT_TAIL_TOL
    finite_moments: bool = True

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("確率ベクトルは 1 次元で空でない必要があります")
        object.__setattr__(self, "probs", _freeze(probs))

    @classmethod
    def from_probs(
        cls,
        probs: Iterable[float],
        tail_tol: float = DEFAULT_TAIL_TOL,
        finite_moments: bool = True,
    ) -> "PopulationState":
        """Validate a probability vector, clipping round-off negatives."""
        values = np.array(list(probs) if not isinstance(probs, np.ndarray) else probs, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("確率ベクトルは 1 次元で空でない必要があります")
        if not np.all(np.isfinite(values)):
            raise ValueError("確率ベクトルに有限でない値が含まれています")
        if values.min() < -NEGATIVE_SLACK:
            raise ValueError(f"負の確率が含まれています (min={values.min():.3e})")
        total = float(values.sum())
        if total > 1.0 + tail_tol or total < 1.0 - tail_tol:
            raise ValueError(
                f"確率の総和 {total:.15g} が [1 - tail_tol, 1] の範囲外です (tail_tol={tail_tol})"
            )
        if values.min() < 0:
            values = np.clip(values, 0.0, None)
            values *= min(total, 1.0) / values.sum()
        return cls(probs=values, tail_tol=tail_tol, finite_moments=finite_moments)

    @property
    def n_max(self) -> int:
        return int(self.probs.size)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    @property
    def mass_deficit(self) -> float:
        return 1.0 - self.mass

    def resized(self, n_states: int) -> "PopulationState":
        """Zero-pad to ``n_states`` levels; truncating away nonzero mass is refused."""
        if n_states == self.n_max:
            return self
        if n_states < self.n_max:
            dropped = float(self.probs[n_states:].sum())
            if dropped > self.tail_tol:
                raise TruncationError(
                    f"{n_states} 準位への切り詰めで質量 {dropped:.3e} が失われます"
                )
            values = self.probs[:n_states].copy()
        else:
            values = np.zeros(n_states)
            values[: self.n_max] = self.probs
        return PopulationState(values, tail_tol=self.tail_tol, finite_moments=self.finite_moments)


@dataclass(frozen=True, eq=False)
class CoherenceBand:
    """Entries ``ρ_{n,n+s}`` of one off-diagonal band, ``n = 0..N-s-1``."""

    s: int
    amps: np.ndarray

    def __post_init__(self) -> None:
        if self.s == 0:
            raise ValueError("コヒーレンスのバンド番号 s は 0 以外である必要があります")
        amps = np.array(self.amps, dtype=complex)
        if amps.ndim != 1:
            raise ValueError("バンドの振幅は 1 次元である必要があります")
        object.__setattr__(self, "amps", _freeze(amps))

    def conjugate(self) -> "CoherenceBand":
        """Band ``-s``; only ``s > 0`` is ever stored."""
        return CoherenceBand(s=-self.s, amps=np.conj(self.amps))


@dataclass(frozen=True, eq=False)
class DensityState:
    """Band-sparse truncated density matrix: populations plus coherence bands ``s > 0``."""

    diag: PopulationState
    bands: Mapping[int, CoherenceBand] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.diag.n_max
        bands: Dict[int, CoherenceBand] = {}
        for key, band in dict(self.bands).items():
            if band.s != key or key <= 0:
                raise ValueError("バンドは s > 0 のキーで保持する必要があります")
            if band.amps.size != n - key:
                raise ValueError(
                    f"バンド s={key} の長さは {n - key} である必要があります (実際: {band.amps.size})"
                )
            bands[key] = band
        object.__setattr__(self, "bands", dict(sorted(bands.items())))

    @property
    def n_max(self) -> int:
        return self.diag.n_max

    @property
    def trace(self) -> float:
        return self.diag.mass

    @property
    def is_diagonal(self) -> bool:
        return not any(np.any(band.amps != 0) for band in self.bands.values())

    def band(self, s: int) -> np.ndarray:
        """Return ``ρ_{n,n+s}``; negative ``s`` is rebuilt by conjugation, absent bands are zero."""
        if s == 0:
            return self.diag.probs.astype(complex)
        stored = self.bands.get(abs(s))
        if stored is None:
            return np.zeros(max(self.n_max - abs(s), 0), dtype=complex)
        return stored.amps if s > 0 else np.conj(stored.amps)

    def to_matrix(self) -> np.ndarray:
        """Dense Hermitian ``N x N`` matrix."""
        n = self.n_max
        rho = np.diag(self.diag.probs.astype(complex))
        idx = np.arange(n)
        for s, band in self.bands.items():
            rows = idx[: n - s]
            rho[rows, rows + s] = band.amps
            rho[rows + s, rows] = np.conj(band.amps)
        return rho

    def is_hermitian(self, atol: float = 1e-14) -> bool:
        rho = self.to_matrix()
        return bool(np.allclose(rho, rho.conj().T, atol=atol))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.to_matrix())[0])

    def validate_positivity(self, slack: float = POSITIVITY_SLACK) -> None:
        smallest = self.min_eigenvalue()
        if smallest < -slack:
            raise ValueError(f"密度行列が正定値ではありません (最小固有値 {smallest:.3e})")

    def resized(self, n_states: int) -> "DensityState":
        """Zero-pad (or trim empty levels) to ``n_states``."""
        if n_states == self.n_max:
            return self
        bands: Dict[int, CoherenceBand] = {}
        for s, band in self.bands.items():
            amps = np.zeros(max(n_states - s, 0), dtype=complex)
            keep = min(amps.size, band.amps.size)
            if np.any(band.amps[keep:] != 0):
                raise TruncationError(f"{n_states} 準位への切り詰めでバンド s={s} の値が失われます")
            amps[:keep] = band.amps[:keep]
            if amps.size:
                bands[s] = CoherenceBand(s=s, amps=amps)
        return DensityState(diag=self.diag.resized(n_states), bands=bands)


def as_density(state: PopulationState | DensityState) -> DensityState:
    """Promote a population vector to a diagonal density state."""
    if isinstance(state, DensityState):
        return state
    return DensityState(diag=state)


def thermal_size(n_th: float, tail_tol: float) -> int:
    """Levels needed for the thermal tail to drop below ``tail_tol``."""
    if n_th == 0:
        return 1
    ratio = n_th / (1.0 + n_th)
    return int(math.floor(math.log(tail_tol) / math.log(ratio))) + 1


def thermal_probs(n_th: float, n_states: int) -> np.ndarray:
    """Geometric law ``P_n = (1/(1+n_th)) (n_th/(1+n_th))^n`` on ``n < n_states``."""
    ratio = n_th / (1.0 + n_th)
    return np.power(ratio, np.arange(n_states, dtype=float)) / (1.0 + n_th)


def thermal_population(
    n_th: float,
    policy: TruncationPolicy,
    n_states: Optional[int] = None,
) -> PopulationState:
    """Thermal distribution truncated where the analytic tail drops below ``tail_tol``."""
    if not n_th >= 0:
        raise ValueError(f"n_th は 0 以上である必要があります (n_th={n_th})")
    required = policy.clamp(thermal_size(n_th, policy.tail_tol))
    n = required if n_states is None else max(int(n_states), 1)
    if n_states is not None and n < required and n_th > 0:
        tail = (n_th / (1.0 + n_th)) ** n
        if tail > policy.tail_tol:
            raise TruncationError(f"{n} 準位では熱分布の裾 {tail:.3e} が tail_tol を超えます")
    return PopulationState(thermal_probs(n_th, n), tail_tol=policy.tail_tol)


def two_point_population(n_th: float, n1: int, policy: TruncationPolicy) -> PopulationState:
    """Mixture of ``|0>`` and ``|n1>`` with ``p = n_th/n1``; the mean is exactly ``n_th``."""
    n1 = int(n1)
    if n1 < 1:
        raise ValueError(f"n1 は正の整数である必要があります (n1={n1})")
    if n1 < n_th:
        raise ValueError(f"n1={n1} は n_th={n_th} 以上である必要があります")
    if n1 >= policy.n_max_cap:
        raise TruncationError(f"n1={n1} が上限 n_max_cap={policy.n_max_cap} 以上です")
    p = n_th / n1
    probs = np.zeros(policy.clamp(n1 + 1))
    probs[0] = 1.0 - p
    probs[n1] += p
    return PopulationState(probs, tail_tol=policy.tail_tol)


def fock_population(n: int, policy: TruncationPolicy) -> PopulationState:
    """Single Fock state ``|n>``."""
    n = int(n)
    if n < 0:
        raise ValueError(f"Fock 状態の番号は 0 以上である必要があります (n={n})")
    probs = np.zeros(policy.clamp(n + 1))
    probs[n] = 1.0
    return PopulationState(probs, tail_tol=policy.tail_tol)


def power_law_weights(n_states: int) -> np.ndarray:
    """Unnormalized law ``(6/π²)/(1+n)²``."""
    return (6.0 / math.pi**2) / np.square(np.arange(1, n_states + 1, dtype=float))


def power_law_population(policy: TruncationPolicy, n_states: Optional[int] = None) -> PopulationState:
    """Inverse-square law truncated at ``n_states`` (default: the cap) and renormalized.

    The untruncated law has no finite moments, so the state is flagged accordingly.
    """
    n = policy.n_max_cap if n_states is None else policy.clamp(n_states)
    logger.debug("power-law state truncated at N=%d", n)
    weights = power_law_weights(n)
    return PopulationState(weights / weights.sum(), tail_tol=policy.tail_tol, finite_moments=False)


def pure_superposition_state(n_th: float, n1: int, policy: TruncationPolicy) -> DensityState:
    """Pure state ``sqrt(1-p)|0> + sqrt(p)|n1>`` with ``p = n_th/n1``."""
    n1 = int(n1)
    if n1 < 1:
        raise ValueError(f"n1 は正の整数である必要があります (n1={n1})")
    p = n_th / n1
    if not p < 1:
        raise ValueError(f"p = n_th/n1 = {p} は 1 未満である必要があります")
    diag = np.zeros(policy.clamp(n1 + 1))
    diag[0] = 1.0 - p
    diag[n1] += p
    population = PopulationState(diag, tail_tol=policy.tail_tol)
    if p == 0:
        return DensityState(diag=population)
    amps = np.zeros(population.n_max - n1, dtype=complex)
    amps[0] = math.sqrt(p * (1.0 - p))
    return DensityState(diag=population, bands={n1: CoherenceBand(s=n1, amps=amps)})
