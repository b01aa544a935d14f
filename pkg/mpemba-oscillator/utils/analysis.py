"""Distances to equilibrium, asymptotic decay-rate fits and crossing detection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.special import kl_div, xlogy
from scipy.stats import linregress

from . import MeasureName
from .evolve import Trajectory
from .grid import TimeGrid, tail_window
from .model import POSITIVITY_SLACK, DensityState, PopulationState, thermal_probs

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-300
EIG_FLOOR = 1e-14
DEFAULT_WINDOW_FRACTION = 0.4
DEFAULT_FIT_FLOOR = 1e-12
MIN_FIT_SAMPLES = 5
MIN_R2 = 0.999
MEASURES: Tuple[MeasureName, ...] = ("kl", "trace", "hs")


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``ln D`` against ``t`` over a trailing window."""

    rate: Optional[float]
    r2: float
    window: Tuple[float, float]
    samples: int


@dataclass(frozen=True, eq=False)
class DistanceTrajectory:
    """Distance to the thermal state sampled on a grid."""

    grid: TimeGrid
    values: np.ndarray
    measure: MeasureName = "kl"
    fitted_rate: Optional[float] = None
    fit_window: Optional[Tuple[float, float]] = None
    fit_r2: Optional[float] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError("距離の系列長が時間グリッドと一致しません")
        if np.any(values < 0):
            raise ValueError("距離は 0 以上である必要があります")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_fit(self, fit: RateFit) -> "DistanceTrajectory":
        return replace(self, fitted_rate=fit.rate, fit_window=fit.window, fit_r2=fit.r2)


@dataclass(frozen=True)
class CrossingReport:
    crossings: List[float] = field(default_factory=list)
    initially_farther: Literal["I", "II"] = "I"
    mpemba_detected: bool = False


def _reference(n_th: float, n: int, positive: bool = False) -> np.ndarray:
    if positive and not n_th > 0:
        raise ValueError(f"相対エントロピーには n_th > 0 が必要です (n_th={n_th})")
    if n_th < 0:
        raise ValueError(f"n_th は 0 以上である必要があります (n_th={n_th})")
    return thermal_probs(n_th, n)


def _log_reference(n_th: float, n: int) -> np.ndarray:
    """``ln P_n^(S)``, finite where ``P_n^(S)`` itself underflows."""
    if not n_th > 0:
        raise ValueError(f"相対エントロピーには n_th > 0 が必要です (n_th={n_th})")
    return -math.log1p(n_th) + np.arange(n) * (math.log(n_th) - math.log1p(n_th))


def thermal_kl(n_initial: float, n_th: float) -> float:
    """Closed-form KL divergence between two untruncated thermal laws."""
    if not n_initial > 0 or not n_th > 0:
        raise ValueError("熱分布の平均占有数は正の値である必要があります")
    return math.log((1.0 + n_th) / (1.0 + n_initial)) + n_initial * math.log(
        n_initial * (1.0 + n_th) / (n_th * (1.0 + n_initial))
    )


def thermal_trajectory_mean(n_initial: float, n_th: float, gamma: float, t: float | np.ndarray):
    """Mean occupation of an initially thermal state; it stays thermal for all ``t``."""
    return n_th + (n_initial - n_th) * np.exp(-2.0 * gamma * np.asarray(t, dtype=float))


def _kl_rows(probs: np.ndarray, n_th: float) -> np.ndarray:
    probs = np.atleast_2d(probs)
    n = probs.shape[-1]
    ref = _reference(n_th, n, positive=True)
    log_ref = _log_reference(n_th, n)
    cleaned = np.where(probs < PROB_FLOOR, 0.0, probs)
    # kl_div adds -x + y, which cancels the first-order effect of truncation leakage;
    # where the thermal law underflows the same terms are built from ln P^(S) directly
    deep_tail = ref < PROB_FLOOR
    terms = np.where(
        deep_tail,
        xlogy(cleaned, cleaned) - cleaned * log_ref - cleaned + ref,
        kl_div(cleaned, ref),
    )
    # rounding can leave a sum of order -1e-17 at equilibrium
    return np.maximum(terms.sum(axis=-1), 0.0)


def kl_population(state: PopulationState, n_th: float) -> float:
    """``Σ P_n ln(P_n / P_n^(S))`` with ``0 ln 0 = 0``."""
    return float(_kl_rows(state.probs, n_th)[0])


def trace_distance_population(state: PopulationState, n_th: float) -> float:
    return 0.5 * float(np.abs(state.probs - _reference(n_th, state.n_max)).sum())


def hs_distance_population(state: PopulationState, n_th: float) -> float:
    return float(np.linalg.norm(state.probs - _reference(n_th, state.n_max)))


def _checked_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(matrix)
    if eigvals[0] < -POSITIVITY_SLACK:
        raise ValueError(f"密度行列の固有値が負です (最小固有値 {eigvals[0]:.3e})")
    return eigvals


def quantum_relative_entropy(rho: DensityState, n_th: float) -> float:
    """``Tr ρ(ln ρ - ln ρ^(S))`` on the truncated space."""
    if rho.is_diagonal:
        return kl_population(rho.diag, n_th)
    ref = _reference(n_th, rho.n_max, positive=True)
    log_ref = _log_reference(n_th, rho.n_max)
    eigvals = _checked_eigenvalues(rho.to_matrix())
    kept = eigvals[eigvals > EIG_FLOOR]
    entropy_term = float(np.sum(kept * np.log(kept)))
    diag = np.where(rho.diag.probs < PROB_FLOOR, 0.0, rho.diag.probs)
    cross_term = float(np.dot(diag, log_ref))
    return max(entropy_term - cross_term - rho.trace + float(ref.sum()), 0.0)


def trace_distance_density(rho: DensityState, n_th: float) -> float:
    if rho.is_diagonal:
        return trace_distance_population(rho.diag, n_th)
    delta = rho.to_matrix() - np.diag(_reference(n_th, rho.n_max))
    return 0.5 * float(np.abs(np.linalg.eigvalsh(delta)).sum())


def hs_distance_density(rho: DensityState, n_th: float) -> float:
    if rho.is_diagonal:
        return hs_distance_population(rho.diag, n_th)
    delta = rho.to_matrix() - np.diag(_reference(n_th, rho.n_max))
    return float(np.linalg.norm(delta))


def distance(state: PopulationState | DensityState, n_th: float, measure: MeasureName = "kl") -> float:
    """Dispatch on state type and measure name."""
    if measure not in MEASURES:
        raise ValueError(f"不明な距離尺度です: {measure}")
    if isinstance(state, DensityState):
        table = {
            "kl": quantum_relative_entropy,
            "trace": trace_distance_density,
            "hs": hs_distance_density,
        }
    else:
        table = {
            "kl": kl_population,
            "trace": trace_distance_population,
            "hs": hs_distance_population,
        }
    return table[measure](state, n_th)


def distance_trajectory(traj: Trajectory, n_th: float, measure: MeasureName = "kl") -> DistanceTrajectory:
    """Distance to the thermal state at every sample of ``traj``."""
    if measure not in MEASURES:
        raise ValueError(f"不明な距離尺度です: {measure}")
    if traj.is_density and traj.bands:
        values = [distance(traj.density(k), n_th, measure) for k in range(len(traj.grid))]
    elif measure == "kl":
        values = _kl_rows(traj.populations, n_th)
    else:
        delta = traj.populations - _reference(n_th, traj.n_max)
        if measure == "trace":
            values = 0.5 * np.abs(delta).sum(axis=1)
        else:
            values = np.linalg.norm(delta, axis=1)
    return DistanceTrajectory(grid=traj.grid, values=np.asarray(values), measure=measure)


def fit_decay_rate(
    traj: DistanceTrajectory,
    window_fraction: float = DEFAULT_WINDOW_FRACTION,
    floor: float = DEFAULT_FIT_FLOOR,
) -> RateFit:
    """Asymptotic exponential rate of ``D(t)`` from a linear fit of ``ln D``.

    Only finite samples with ``D > floor`` are used, and of those the final
    ``window_fraction``. The rate is reported as absent when ``r² < 0.999``.
    """
    window = tail_window(traj.values, window_fraction, floor)
    if window is None or window.size < MIN_FIT_SAMPLES:
        raise ValueError(
            f"減衰率の当てはめに使えるサンプルが {MIN_FIT_SAMPLES} 点未満です"
        )
    times = traj.grid.times[window]
    fit = linregress(times, np.log(traj.values[window]))
    r2 = float(fit.rvalue**2)
    rate: Optional[float] = -float(fit.slope)
    if not (r2 >= MIN_R2 and rate > 0):
        logger.warning("減衰率の当てはめが不安定です (r2=%.6f, slope=%.4g)", r2, fit.slope)
        rate = None
    return RateFit(rate=rate, r2=r2, window=(float(times[0]), float(times[-1])), samples=int(window.size))


def _sign_changes(times: np.ndarray, diff: np.ndarray) -> List[float]:
    crossings: List[float] = []
    nonzero = np.flatnonzero(diff != 0)
    for a, b in zip(nonzero[:-1], nonzero[1:]):
        if np.sign(diff[a]) == np.sign(diff[b]):
            continue
        if b == a + 1:
            frac = diff[a] / (diff[a] - diff[b])
            crossings.append(float(times[a] + frac * (times[b] - times[a])))
        else:
            crossings.append(float(times[a + 1]))
    return crossings


def detect_crossing(traj_i: DistanceTrajectory, traj_ii: DistanceTrajectory) -> CrossingReport:
    """Crossings of ``ln D_II - ln D_I`` and the Mpemba verdict."""
    if not traj_i.grid.same_as(traj_ii.grid):
        raise ValueError("比較する 2 つの軌道の時間グリッドが一致しません")
    times = traj_i.grid.times
    d_i, d_ii = traj_i.values, traj_ii.values
    usable = (d_i > PROB_FLOOR) & (d_ii > PROB_FLOOR)
    diff = np.zeros(times.size)
    diff[usable] = np.log(d_ii[usable]) - np.log(d_i[usable])
    crossings = _sign_changes(times[usable], diff[usable])
    farther: Literal["I", "II"] = "II" if d_ii[0] > d_i[0] else "I"
    detected = False
    if crossings:
        after = times > crossings[-1]
        far, near = (d_ii, d_i) if farther == "II" else (d_i, d_ii)
        detected = bool(np.any(after) and np.all(far[after] < near[after]))
    return CrossingReport(crossings=crossings, initially_farther=farther, mpemba_detected=detected)
