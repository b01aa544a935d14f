"""Exact eigensystem of the population block and eigenvalues of the coherence bands.

Right eigenvectors are ``ψ_n^(α) = P_n^(S) c^α φ_n^(α)`` with ``c = n_th/(1+n_th)``
and left eigenvectors are the Meixner polynomials ``φ_n^(α) = M_α(n; 1, c)``.

The terminating sum ``Σ_j C(α, j) C(n, j) (-1/n_th)^j`` cancels catastrophically
once ``n`` and ``α`` reach a few dozen, so the polynomials come from the
three-term recurrence in ``α`` carried out on integers. With ``n_th = p/q``
exactly, ``A_α(n) = p^α α! φ_n^(α)`` satisfies

    A_{α+1} = (α(p+q) + (α+1)p - q n) A_α - p(p+q) α² A_{α-1}

with ``A_0 = 1`` and ``A_1 = p - q n``. Conversion to floating point happens
once, in log space, so ``ψ`` stays finite where ``φ`` alone would overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from .model import BathParams, PopulationState


def _check_n_th(n_th: float) -> None:
    if not n_th > 0:
        raise ValueError(
            f"スペクトル分解には n_th > 0 が必要です (n_th={n_th}); 零温度では縮退します"
        )


def _check_alpha(alpha: int) -> None:
    if alpha < 0:
        raise ValueError("alpha は 0 以上である必要があります")


@dataclass(frozen=True)
class _Bath:
    """``n_th = p/q`` in lowest terms plus the logs the conversions need."""

    p: int
    q: int

    @classmethod
    def of(cls, n_th: float) -> "_Bath":
        ratio = Fraction(n_th)
        return cls(ratio.numerator, ratio.denominator)

    @property
    def log_p(self) -> float:
        return math.log(self.p)

    @property
    def log_c(self) -> float:
        return math.log(self.p) - math.log(self.p + self.q)

    @property
    def log_one_minus_c(self) -> float:
        return math.log(self.q) - math.log(self.p + self.q)

    def log_phi_scale(self, alpha: int) -> float:
        """``-log(p^α α!)``."""
        return -alpha * self.log_p - math.lgamma(alpha + 1)


def _meixner_numerators(alpha_max: int, bath: _Bath, levels: Sequence[int]) -> Iterator[np.ndarray]:
    """Yield ``A_α(n)`` as exact integers for ``α = 0..alpha_max``."""
    p, q = bath.p, bath.q
    n = np.array([int(level) for level in levels], dtype=object)
    previous = np.array([1] * n.size, dtype=object)
    yield previous
    if alpha_max == 0:
        return
    current = p - q * n
    yield current
    for alpha in range(1, alpha_max):
        following = (alpha * (p + q) + (alpha + 1) * p - q * n) * current - p * (p + q) * alpha * alpha * previous
        previous, current = current, following
        yield current


def _sign_and_log(values: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    signs = np.array([(v > 0) - (v < 0) for v in values], dtype=float)
    logs = np.array([math.log(abs(v)) if v else -np.inf for v in values])
    return signs, logs


def _scaled(signs: np.ndarray, logs: np.ndarray, offset) -> np.ndarray:
    with np.errstate(over="ignore"):
        return signs * np.exp(logs + offset)


def _as_vectors(alpha: int, numerators: np.ndarray, bath: _Bath) -> Tuple[np.ndarray, np.ndarray]:
    """``(φ^(α), ψ^(α))`` on ``n < len(numerators)``."""
    signs, logs = _sign_and_log(numerators)
    scale = bath.log_phi_scale(alpha)
    log_weight = bath.log_one_minus_c + (np.arange(numerators.size) + alpha) * bath.log_c
    return _scaled(signs, logs, scale), _scaled(signs, logs, scale + log_weight)


def _eigen_rows(alpha_max: int, n_th: float, n: int) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(α, φ^(α), ψ^(α))`` for ``α = 0..alpha_max`` in one pass of the recurrence."""
    bath = _Bath.of(n_th)
    for alpha, numerators in enumerate(_meixner_numerators(alpha_max, bath, range(n))):
        phi, psi = _as_vectors(alpha, numerators, bath)
        yield alpha, phi, psi


def _eigen_pair(alpha: int, n_th: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    _check_n_th(n_th)
    _check_alpha(alpha)
    bath = _Bath.of(n_th)
    for numerators in _meixner_numerators(alpha, bath, range(n)):
        pass
    return _as_vectors(alpha, numerators, bath)


@dataclass(frozen=True, eq=False)
class SpectralMode:
    """One eigenmode; eigenvectors are only carried for the population block."""

    alpha: int
    s: int
    eigenvalue: complex
    right_vec: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left_vec: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Population modes ``α = 0..α_max`` and the amplitudes ``C_α`` of an initial state."""

    modes: List[SpectralMode]
    amplitudes: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """``Σ_α C_α ψ^(α)``, the initial distribution rebuilt from its modes."""
        out = np.zeros(self.modes[0].right_vec.size)
        for mode, amp in zip(self.modes, self.amplitudes):
            out += amp * mode.right_vec
        return out


def population_eigenvalue(alpha: int, gamma: float) -> float:
    """``λ_α = -2γα``."""
    _check_alpha(alpha)
    return -2.0 * gamma * alpha


def coherence_eigenvalue(alpha: int, s: int, params: BathParams) -> complex:
    """``λ_α^(s) = -2γ(α + |s|/2) + i s ω₀``."""
    if s == 0:
        raise ValueError("コヒーレンスの固有値には s != 0 が必要です")
    _check_alpha(alpha)
    return complex(-2.0 * params.gamma * (alpha + abs(s) / 2.0), s * params.omega0)


def left_eigenvector(alpha: int, n_th: float, n: int) -> np.ndarray:
    """``φ_n^(α)`` on ``n < N``, normalized so that ``Σ_n φ_n ψ_n = 1``.

    Entries beyond the float range come back as ``±inf``.
    """
    return _eigen_pair(alpha, n_th, n)[0]


def right_eigenvector(alpha: int, n_th: float, n: int) -> np.ndarray:
    """``ψ_n^(α)`` on ``n < N``; ``α = 0`` is the thermal distribution."""
    return _eigen_pair(alpha, n_th, n)[1]


def dual_normalization(alpha: int, n_th: float) -> float:
    """``B_α`` in ``φ_n^(α) = B_α ((1+n_th)/n_th)^n ψ_n^(α)``, fixed by unit dual pairing."""
    _check_n_th(n_th)
    return (1.0 + n_th) ** (alpha + 1) / n_th**alpha


def _exact_ratio(numerator: int, denominator: int) -> float:
    # int / int rounds correctly and underflows to 0.0
    try:
        return numerator / denominator
    except OverflowError:
        return math.inf if numerator > 0 else -math.inf


def spectral_amplitudes(p0: PopulationState, n_th: float, alpha_max: int) -> np.ndarray:
    """``C_α = Σ_n P_n(0) φ_n^(α)`` for ``α = 0..alpha_max``.

    The sum runs in exact arithmetic over the support of ``p0``; only the
    result is rounded.
    """
    _check_n_th(n_th)
    bath = _Bath.of(n_th)
    support = np.flatnonzero(p0.probs > 0)
    ratios = [float(value).as_integer_ratio() for value in p0.probs[support]]
    common = max(den for _, den in ratios)
    weights = np.array([num * (common // den) for num, den in ratios], dtype=object)
    amplitudes = np.empty(alpha_max + 1)
    for alpha, numerators in enumerate(_meixner_numerators(alpha_max, bath, support)):
        total = int(np.dot(weights, numerators))
        amplitudes[alpha] = _exact_ratio(total, common * bath.p**alpha * math.factorial(alpha))
    return amplitudes


def decompose(p0: PopulationState, params: BathParams, alpha_max: int) -> SpectralDecomposition:
    """Modes and amplitudes of ``p0`` on its own truncation."""
    _check_n_th(params.n_th)
    _check_alpha(alpha_max)
    modes = [
        SpectralMode(
            alpha=alpha,
            s=0,
            eigenvalue=complex(population_eigenvalue(alpha, params.gamma)),
            right_vec=psi,
            left_vec=phi,
        )
        for alpha, phi, psi in _eigen_rows(alpha_max, params.n_th, p0.n_max)
    ]
    return SpectralDecomposition(modes=modes, amplitudes=spectral_amplitudes(p0, params.n_th, alpha_max))


def identity_resolution_residual(n_th: float, n: int, alpha_max: int, window: int = 20) -> float:
    """Largest deviation of ``Σ_{α ≤ α_max} ψ_n^(α) φ_m^(α)`` from ``δ_{nm}`` for ``n, m < window``."""
    _check_n_th(n_th)
    size = min(n, window)
    partial = np.zeros((size, size))
    for _, phi, psi in _eigen_rows(alpha_max, n_th, size):
        partial += np.outer(psi, phi)
    return float(np.max(np.abs(partial - np.eye(size))))


def _summation_length(alpha: int, l: int, n_th: float, tol: float) -> int:
    # smallest N with c^N N^(α+l) well below tol, c = n_th/(1+n_th)
    log_ratio = math.log(n_th / (1.0 + n_th))
    power = alpha + l
    n = max(32, int(math.log(tol) / log_ratio) + 1)
    while n * log_ratio + power * math.log(n) > math.log(tol):
        n = int(n * 1.5) + 1
    return n


def eigen_moment(alpha: int, l: int, n_th: float, tail_tol: float = 1e-16) -> float:
    """``Θ_{α,l} = Σ_n n^l ψ_n^(α)``; vanishes for ``l < α``.

    The truncated sum is formed exactly, so the cancellation below ``l = α``
    leaves only the tail beyond the summation length.
    """
    _check_n_th(n_th)
    _check_alpha(alpha)
    n = _summation_length(alpha, l, n_th, tail_tol)
    bath = _Bath.of(n_th)
    p, s = bath.p, bath.p + bath.q
    for numerators in _meixner_numerators(alpha, bath, range(n)):
        pass
    # ψ_k = q p^k A_k / (s^(k+α+1) α!), brought over the common denominator s^(n+α) α!
    total = 0
    p_power, s_power = 1, s ** (n - 1)
    for k in range(n):
        total += k**l * p_power * s_power * numerators[k]
        p_power *= p
        s_power //= s
    total *= bath.q
    return _exact_ratio(total, s ** (n + alpha) * math.factorial(alpha))
