"""Time evolution of population vectors and band-sparse density states."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from . import PropagationMethod
from .generator import (
    SymmetrizationError,
    TridiagonalGenerator,
    coherence_generator,
    population_generator,
    symmetrize,
)
from .grid import TimeGrid
from .model import (
    DEFAULT_TAIL_TOL,
    BathParams,
    CoherenceBand,
    DensityState,
    PopulationState,
)

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-13
DEFAULT_BAND_CAP = 64
# ||scale * v0|| above this (relative to ||v0||) makes the symmetric route too lossy
CONDITION_LIMIT = 1e5
TRUNCATION_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled evolution; ``populations`` is ``K x N``, each band ``K x (N - s)``."""

    grid: TimeGrid
    populations: np.ndarray
    mass_deficit: np.ndarray
    bands: Dict[int, np.ndarray] = field(default_factory=dict)
    is_density: bool = False
    method: str = "spectral"
    fallback_reason: Optional[str] = None
    tail_tol: float = DEFAULT_TAIL_TOL

    @property
    def n_max(self) -> int:
        return int(self.populations.shape[1])

    @property
    def truncation_limited(self) -> bool:
        return bool(np.max(self.mass_deficit) > TRUNCATION_FACTOR * self.tail_tol)

    def population(self, k: int) -> PopulationState:
        return PopulationState(self.populations[k], tail_tol=self.tail_tol)

    def density(self, k: int) -> DensityState:
        bands = {s: CoherenceBand(s=s, amps=values[k]) for s, values in self.bands.items()}
        return DensityState(diag=self.population(k), bands=bands)

    @property
    def states(self) -> List[Union[PopulationState, DensityState]]:
        build = self.density if self.is_density else self.population
        return [build(k) for k in range(len(self.grid))]


def _spectral(vec0: np.ndarray, gen: TridiagonalGenerator, times: np.ndarray) -> np.ndarray:
    sym = symmetrize(gen)
    log_scale = sym.log_scale - sym.log_scale.min()
    weighted = vec0 * np.exp(log_scale)
    reference = max(float(np.linalg.norm(vec0)), np.finfo(float).tiny)
    if np.linalg.norm(weighted) > CONDITION_LIMIT * reference:
        raise SymmetrizationError("対称化の相似変換の条件数が大きすぎます")
    eigvals, eigvecs = eigh_tridiagonal(sym.diag, sym.offdiag)
    coeffs = eigvecs.T @ weighted
    decay = np.exp(np.outer(times, eigvals))
    return ((decay * coeffs) @ eigvecs.T) * np.exp(-log_scale)


def _ode(
    vec0: np.ndarray,
    gen: TridiagonalGenerator,
    times: np.ndarray,
    rtol: float,
    atol: float,
) -> np.ndarray:
    if times[-1] == 0:
        return np.repeat(vec0[None, :], times.size, axis=0)
    sol = solve_ivp(
        lambda _t, y: gen.matvec(y),
        (0.0, float(times[-1])),
        vec0,
        method="DOP853",
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if sol.status != 0:
        raise RuntimeError(f"ODE 積分に失敗しました: {sol.message}")
    return sol.y.T


def _propagate_vector(
    vec0: np.ndarray,
    gen: TridiagonalGenerator,
    grid: TimeGrid,
    method: PropagationMethod,
    rtol: float,
    atol: float,
) -> tuple[np.ndarray, str, Optional[str]]:
    times = grid.times
    reason: Optional[str] = None
    if method == "spectral":
        try:
            values = _spectral(vec0, gen, times)
        except SymmetrizationError as exc:
            reason = str(exc)
            logger.warning("スペクトル伝播を ODE に切り替えます (s=%d): %s", gen.s, reason)
            values = _ode(vec0, gen, times, rtol, atol)
            method = "ode"
    elif method == "ode":
        values = _ode(vec0, gen, times, rtol, atol)
    else:
        raise ValueError(f"不明な伝播方法です: {method}")
    values[times == 0] = vec0
    return values, method, reason


def propagate_population(
    p0: PopulationState,
    gen: TridiagonalGenerator,
    grid: TimeGrid,
    method: PropagationMethod = "spectral",
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Trajectory:
    """Evolve ``P(0)`` under the population generator, sampling on ``grid``."""
    if gen.s != 0:
        raise ValueError("母集団の伝播には s=0 の生成子が必要です")
    if gen.size != p0.n_max:
        raise ValueError(f"初期分布の長さ {p0.n_max} と生成子の大きさ {gen.size} が一致しません")
    values, used, reason = _propagate_vector(p0.probs.copy(), gen, grid, method, rtol, atol)
    deficit = 1.0 - values.sum(axis=1)
    trajectory = Trajectory(
        grid=grid,
        populations=values,
        mass_deficit=deficit,
        method=used,
        fallback_reason=reason,
        tail_tol=p0.tail_tol,
    )
    if trajectory.truncation_limited:
        logger.warning("切り詰めによる質量損失が大きすぎます (最大 %.3e)", float(deficit.max()))
    return trajectory


def band_weights(s: int, n: int) -> np.ndarray:
    """``sqrt((m+s)!/m!)`` for ``m < n``: maps ``ρ_{m,m+s}`` to the amplitude ``b_m``."""
    levels = np.arange(n, dtype=float)
    return np.exp(0.5 * (gammaln(levels + s + 1.0) - gammaln(levels + 1.0)))


def propagate_band(
    band: CoherenceBand,
    params: BathParams,
    grid: TimeGrid,
    method: PropagationMethod = "spectral",
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> tuple[np.ndarray, str, Optional[str]]:
    """Evolve one coherence band in the rotating gauge and reapply the phase."""
    size = band.amps.size
    if size < 2:
        raise ValueError(f"バンド s={band.s} の長さ {size} が短すぎます")
    gen = coherence_generator(params, band.s, size)
    weights = band_weights(band.s, size)
    amplitudes, used, reason = _propagate_vector(
        band.amps * weights, gen, grid, method, rtol, atol
    )
    phase = np.exp(1j * gen.phase_rate * grid.times)
    return amplitudes / weights * phase[:, None], used, reason


def propagate_density(
    rho0: DensityState,
    params: BathParams,
    grid: TimeGrid,
    method: PropagationMethod = "spectral",
    band_cap: int = DEFAULT_BAND_CAP,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Trajectory:
    """Evolve populations and every stored band independently."""
    for s in rho0.bands:
        if s > band_cap:
            raise ValueError(f"バンド s={s} が上限 {band_cap} を超えています")
    diag = propagate_population(
        rho0.diag, population_generator(params, rho0.n_max), grid, method, rtol, atol
    )
    bands: Dict[int, np.ndarray] = {}
    used = diag.method
    reason = diag.fallback_reason
    for s, band in rho0.bands.items():
        if not np.any(band.amps != 0):
            bands[s] = np.zeros((len(grid), band.amps.size), dtype=complex)
            continue
        bands[s], band_method, band_reason = propagate_band(band, params, grid, method, rtol, atol)
        if band_method != method:
            used, reason = band_method, band_reason
    return Trajectory(
        grid=grid,
        populations=diag.populations,
        mass_deficit=diag.mass_deficit,
        bands=bands,
        is_density=True,
        method=used,
        fallback_reason=reason,
        tail_tol=rho0.diag.tail_tol,
    )


def propagate(
    state: PopulationState | DensityState,
    params: BathParams,
    grid: TimeGrid,
    method: PropagationMethod = "spectral",
) -> Trajectory:
    """Dispatch on the state type with the generator built from ``params``."""
    if isinstance(state, DensityState):
        return propagate_density(state, params, grid, method)
    return propagate_population(state, population_generator(params, state.n_max), grid, method)
