"""Moments of populations and coherence bands, their exact dynamics and moment matching.

Both moment chains share one coupling matrix. With ``b_n`` the band amplitude
(``b_n = P_n`` for ``s = 0``) and ``Q_l = Σ n^l b_n``,

    (1/2γ) dQ_l/dt = Σ_{k ≤ l} A_{lk} Q_k,   A_{ll} = -(l + s/2),

so every chain is lower triangular and is solved exactly, layer by layer.
The coefficients are built in rational arithmetic.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .evolve import band_weights
from .grid import TimeGrid
from .model import DEFAULT_TAIL_TOL, DensityState, PopulationState, as_density

logger = logging.getLogger(__name__)

MAX_MOMENT_ORDER = 12
MATCH_TOL = 1e-9
DEFAULT_H_MAX = 16
VERTEX_TOL = 1e-12


class InfeasibleSupportError(ValueError):
    """No nonnegative weights on the requested support reproduce the thermal moments."""


@dataclass(frozen=True, eq=False)
class MomentVector:
    """``Q_l`` for ``l = 0..l_max``; ``s = 0`` holds population moments."""

    s: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.s < 0:
            raise ValueError("モーメントのバンド番号 s は 0 以上である必要があります")
        dtype = float if self.s == 0 else complex
        values = np.array(self.values, dtype=dtype)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def l_max(self) -> int:
        return int(self.values.size) - 1

    def __getitem__(self, l: int):
        return self.values[l]


@dataclass(frozen=True)
class AccelerationOrder:
    """Largest order ``h`` of the vanishing-moment conditions and the rate bound ``γh``."""

    h: int
    predicted_rate: float
    r: int
    band_orders: Dict[int, int] = field(default_factory=dict)


def _check_order(l_max: int) -> None:
    if l_max < 0 or l_max > MAX_MOMENT_ORDER:
        raise ValueError(f"l_max は 0 以上 {MAX_MOMENT_ORDER} 以下である必要があります (l_max={l_max})")


@lru_cache(maxsize=64)
def _coupling(n_th: Fraction, s: int, l_max: int) -> Tuple[Tuple[Fraction, ...], ...]:
    half = Fraction(1, 2)
    rows = []
    for l in range(l_max + 1):
        coef = [Fraction(0)] * (l + 2)
        for k in range(l + 1):
            binom = math.comb(l, k)
            coef[k + 1] += (1 + n_th) * binom * (-1) ** (l - k)
            coef[k + 1] += n_th * binom
            coef[k] += n_th * (1 + s) * binom
        coef[l + 1] -= 1 + 2 * n_th
        coef[l] -= n_th + s * (n_th + half)
        assert coef[l + 1] == 0
        rows.append(tuple(coef[: l + 1]))
    return tuple(rows)


def moment_coupling_matrix(n_th: float, s: int, l_max: int) -> np.ndarray:
    """Lower-triangular ``A`` with ``(1/2γ) dQ/dt = A Q`` for band ``s``."""
    _check_order(l_max)
    rows = _coupling(Fraction(n_th), int(s), l_max)
    out = np.zeros((l_max + 1, l_max + 1))
    for l, row in enumerate(rows):
        out[l, : l + 1] = [float(value) for value in row]
    return out


def _stationary_exact(n_th: float, l_max: int) -> List[Fraction]:
    rows = _coupling(Fraction(n_th), 0, l_max)
    q = [Fraction(1)]
    for l in range(1, l_max + 1):
        q.append(-sum(rows[l][k] * q[k] for k in range(l)) / rows[l][l])
    return q


def stationary_moments(n_th: float, l_max: int) -> MomentVector:
    """Moments of the thermal law from the chain's fixed point, ``Q_0 = 1``."""
    if not n_th >= 0:
        raise ValueError(f"n_th は 0 以上である必要があります (n_th={n_th})")
    _check_order(l_max)
    return MomentVector(s=0, values=[float(q) for q in _stationary_exact(n_th, l_max)])


def population_moments(state: PopulationState, l_max: int) -> MomentVector:
    _check_order(l_max)
    levels = np.arange(state.n_max, dtype=float)
    return MomentVector(s=0, values=[float(np.dot(levels**l, state.probs)) for l in range(l_max + 1)])


def coherence_moments(rho: DensityState, s: int, l_max: int) -> MomentVector:
    """``Q_l^(s) = Σ n^l sqrt((n+s)!/n!) ρ_{n,n+s}``; an absent band gives zeros."""
    if s < 1:
        raise ValueError(f"s は 1 以上である必要があります (s={s})")
    _check_order(l_max)
    band = rho.band(s)
    if band.size == 0:
        return MomentVector(s=s, values=np.zeros(l_max + 1, dtype=complex))
    amplitudes = band * band_weights(s, band.size)
    levels = np.arange(band.size, dtype=float)
    return MomentVector(s=s, values=[np.dot(levels**l, amplitudes) for l in range(l_max + 1)])


def _chain_coefficients(q0: Sequence[float], n_th: float, s: int) -> List[List[Fraction]]:
    # Q_l(t) = Σ_{j ≤ l} K[l][j] exp(-2γ(j + s/2) t); rates differ by 2γ(l - j)
    l_max = len(q0) - 1
    rows = _coupling(Fraction(n_th), s, l_max)
    coeffs: List[List[Fraction]] = []
    for l in range(l_max + 1):
        row = []
        for j in range(l):
            driven = sum(rows[l][k] * coeffs[k][j] for k in range(j, l))
            row.append(driven / (l - j))
        row.append(Fraction(q0[l]) - sum(row))
        coeffs.append(row)
    return coeffs


def _evaluate_chain(q0: np.ndarray, n_th: float, s: int, gamma: float, times: np.ndarray) -> np.ndarray:
    coeffs = _chain_coefficients([float(v) for v in q0], n_th, s)
    l_max = len(coeffs) - 1
    decay = np.exp(-2.0 * gamma * np.outer(times, np.arange(l_max + 1) + 0.5 * s))
    out = np.zeros((times.size, l_max + 1))
    for l, row in enumerate(coeffs):
        out[:, l] = decay[:, : l + 1] @ np.array([float(value) for value in row])
    out[times == 0] = q0
    return out


def evolve_population_moments(
    q0: MomentVector,
    n_th: float,
    gamma: float,
    grid: TimeGrid,
) -> List[MomentVector]:
    """Exact closed-form solution of the population moment chain on ``grid``."""
    if q0.s != 0:
        raise ValueError("母集団モーメントには s=0 が必要です")
    _check_order(q0.l_max)
    values = _evaluate_chain(q0.values, n_th, 0, gamma, grid.times)
    return [MomentVector(s=0, values=row) for row in values]


def evolve_coherence_moments(
    q0: MomentVector,
    s: int,
    n_th: float,
    gamma: float,
    grid: TimeGrid,
    omega0: float = 0.0,
) -> List[MomentVector]:
    """Exact solution of the band-``s`` chain; ``omega0`` restores the lab-frame phase."""
    if s < 1 or q0.s != s:
        raise ValueError(f"バンド番号が一致しません (q0.s={q0.s}, s={s})")
    _check_order(q0.l_max)
    times = grid.times
    real = _evaluate_chain(q0.values.real, n_th, s, gamma, times)
    imag = _evaluate_chain(q0.values.imag, n_th, s, gamma, times)
    values = (real + 1j * imag) * np.exp(1j * omega0 * s * times)[:, None]
    return [MomentVector(s=s, values=row) for row in values]


def _matches(value: float, target: float, scale: float = 1.0) -> bool:
    return abs(value - target) <= MATCH_TOL * max(abs(target), scale)


def matched_order(state: PopulationState, n_th: float, r_max: int) -> int:
    """Number ``r`` of leading moments equal to the thermal ones (``r ≤ r_max``)."""
    if r_max < 1:
        return 0
    ours = population_moments(state, r_max)
    thermal = stationary_moments(n_th, r_max)
    r = 0
    for l in range(1, r_max + 1):
        if not _matches(ours[l], thermal[l]):
            break
        r = l
    return r


def _band_vanishing_order(rho: DensityState, s: int, l_limit: int) -> int:
    # first l with Q_l^(s) != 0, or l_limit when all probed orders vanish
    band = rho.band(s)
    if l_limit <= 0 or band.size == 0:
        return max(l_limit, 0)
    amplitudes = band * band_weights(s, band.size)
    levels = np.arange(band.size, dtype=float)
    for l in range(l_limit):
        weighted = levels**l * amplitudes
        scale = float(np.sum(np.abs(weighted)))
        if abs(np.sum(weighted)) > MATCH_TOL * max(scale, 1.0):
            return l
    return l_limit


def acceleration_order(
    state: PopulationState | DensityState,
    n_th: float,
    h_max: int = DEFAULT_H_MAX,
    gamma: float = 1.0,
) -> AccelerationOrder:
    """Largest ``h ≤ h_max`` with ``Q_l^(s)(0)`` thermal for every ``2l + s < h``, ``l + s > 0``."""
    if h_max < 1:
        raise ValueError(f"h_max は 1 以上である必要があります (h_max={h_max})")
    rho = as_density(state)
    if not rho.diag.finite_moments:
        raise ValueError("モーメントが発散する初期状態には加速次数を定義できません")
    r_max = min(h_max // 2, MAX_MOMENT_ORDER)
    r = matched_order(rho.diag, n_th, r_max)
    h = min(2 * (r + 1), h_max)
    band_orders: Dict[int, int] = {}
    for s in rho.bands:
        if s >= h:
            continue
        l_limit = min((h - s + 1) // 2, MAX_MOMENT_ORDER + 1)
        first = _band_vanishing_order(rho, s, l_limit)
        band_orders[s] = first
        h = min(h, s + 2 * first)
    logger.debug("acceleration order h=%d (r=%d, bands=%s)", h, r, band_orders)
    return AccelerationOrder(h=h, predicted_rate=gamma * h, r=r, band_orders=band_orders)


def _two_point_weights(n_th: float, r: int, n1: int) -> np.ndarray:
    p = n_th / n1
    if p > 1:
        raise InfeasibleSupportError(f"台 {{0, {n1}}} では p = n_th/n1 = {p:.6g} > 1 となります")
    thermal = stationary_moments(n_th, r)
    for l in range(2, r + 1):
        if not _matches(p * float(n1) ** l, thermal[l]):
            raise InfeasibleSupportError(
                f"台 {{0, {n1}}} では {l} 次のモーメントを熱平衡に一致させられません"
            )
    return np.array([1.0 - p, p])


def _general_weights(n_th: float, r: int, points: np.ndarray) -> np.ndarray:
    targets = stationary_moments(n_th, r).values
    row_scale = np.maximum(1.0, np.abs(targets))
    system = np.array([points**l for l in range(r + 1)]) / row_scale[:, None]
    rhs = targets / row_scale
    infeasible = InfeasibleSupportError(
        f"台 {points.astype(int).tolist()} では非負の重みで {r} 次までのモーメントを一致させられません"
    )
    least_norm = np.linalg.lstsq(system, rhs, rcond=None)[0]
    if least_norm.min() >= 0 and np.max(np.abs(system @ least_norm - rhs)) <= MATCH_TOL:
        return least_norm
    # vertex with the smallest next moment: at most r+1 points, kept low in n
    cost = (points / max(points.max(), 1.0)) ** (r + 1)
    result = linprog(cost, A_eq=system, b_eq=rhs, bounds=(0, None), method="highs-ds")
    if result.status != 0:
        logger.debug("linprog status %d: %s", result.status, result.message)
        raise infeasible
    basis = np.flatnonzero(result.x > VERTEX_TOL)
    weights = np.zeros(points.size)
    weights[basis] = np.linalg.lstsq(system[:, basis], rhs, rcond=None)[0]
    if weights.min() < -VERTEX_TOL:
        raise infeasible
    weights = np.clip(weights, 0.0, None)
    if np.max(np.abs(system @ weights - rhs)) > MATCH_TOL:
        raise infeasible
    return weights


def construct_matched_state(
    n_th: float,
    r: int,
    support: Sequence[int],
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> PopulationState:
    """Distribution on ``support`` whose first ``r`` moments equal the thermal ones."""
    if not n_th > 0:
        raise ValueError(f"n_th は正の値である必要があります (n_th={n_th})")
    if r < 1 or r > MAX_MOMENT_ORDER:
        raise ValueError(f"r は 1 以上 {MAX_MOMENT_ORDER} 以下である必要があります (r={r})")
    points = sorted({int(n) for n in support})
    if len(points) != len(list(support)) or points[0] < 0:
        raise ValueError("support は重複のない 0 以上の整数である必要があります")
    if len(points) < r + 1:
        raise ValueError(f"support には少なくとも r+1={r + 1} 点が必要です")
    grid = np.array(points, dtype=float)
    if len(points) == 2 and points[0] == 0:
        weights = _two_point_weights(n_th, r, points[1])
    else:
        weights = _general_weights(n_th, r, grid)
    probs = np.zeros(points[-1] + 1)
    probs[points] = weights
    probs /= probs.sum()
    state = PopulationState(probs, tail_tol=tail_tol)
    achieved = matched_order(state, n_th, r)
    if achieved < r:
        raise InfeasibleSupportError(f"構成した分布の一致次数 {achieved} が要求 r={r} に届きません")
    logger.info("matched state r=%d on %d support points", r, int(np.count_nonzero(weights)))
    return state
