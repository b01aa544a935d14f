"""Truncated tridiagonal generators for the population block and coherence bands."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BathParams


class SymmetrizationError(ValueError):
    """A coupling product vanishes, so no diagonal similarity to a symmetric matrix exists."""


def _freeze(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class TridiagonalGenerator:
    """Tridiagonal rate matrix in physical time units.

    ``upper[k]`` is the entry ``(k, k+1)`` (inflow into ``k`` from ``k+1``) and
    ``lower[k]`` is the entry ``(k+1, k)`` (inflow into ``k+1`` from ``k``).
    """

    diag: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    s: int = 0
    phase_rate: float = 0.0
    boundary_outflow: float = 0.0

    def __post_init__(self) -> None:
        diag = _freeze(self.diag)
        upper = _freeze(self.upper)
        lower = _freeze(self.lower)
        if upper.size != diag.size - 1 or lower.size != diag.size - 1:
            raise ValueError("副対角成分の長さは N-1 である必要があります")
        if np.any(upper < 0) or np.any(lower < 0):
            raise ValueError("結合係数は 0 以上である必要があります")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)

    @property
    def size(self) -> int:
        return int(self.diag.size)

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        """Apply the generator to a real or complex vector."""
        out = self.diag * vec
        out[:-1] += self.upper * vec[1:]
        out[1:] += self.lower * vec[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def column_sums(self) -> np.ndarray:
        sums = self.diag.copy()
        sums[1:] += self.upper
        sums[:-1] += self.lower
        return sums

    def sup_norm(self) -> float:
        """Infinity norm (maximum absolute row sum)."""
        rows = np.abs(self.diag)
        rows[:-1] += self.upper
        rows[1:] += self.lower
        return float(rows.max())


@dataclass(frozen=True, eq=False)
class SymmetrizedGenerator:
    """Symmetric tridiagonal matrix ``S`` with ``M = diag(scale)^-1 S diag(scale)``.

    The similarity is kept in log form because ``scale`` grows geometrically with ``n``.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    log_scale: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "diag", _freeze(self.diag))
        object.__setattr__(self, "offdiag", _freeze(self.offdiag))
        object.__setattr__(self, "log_scale", _freeze(self.log_scale))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


def population_generator(params: BathParams, n: int) -> TridiagonalGenerator:
    """Birth-death generator of the Pauli master equation on levels ``0..n-1``.

    The outflow from the top level to ``n`` is kept on the diagonal and not
    returned anywhere (absorbing truncation); its rate is recorded.
    """
    if n < 2:
        raise ValueError(f"準位数 N は 2 以上である必要があります (N={n})")
    levels = np.arange(n, dtype=float)
    w_up, w_down = params.w_up, params.w_down
    diag = -(w_up * (levels + 1.0) + w_down * levels)
    upper = w_down * levels[1:]
    lower = w_up * levels[1:]
    return TridiagonalGenerator(
        diag=diag,
        upper=upper,
        lower=lower,
        s=0,
        phase_rate=0.0,
        boundary_outflow=w_up * n,
    )


def coherence_generator(params: BathParams, s: int, n: int) -> TridiagonalGenerator:
    """Generator of the rotating-frame amplitudes ``b_n`` of coherence band ``s``.

    ``ρ_{n,n+s} = sqrt(n!/(n+s)!) b_n e^{iω₀st}``; the phase is carried in
    ``phase_rate`` and applied by the caller.
    """
    if s < 1:
        raise ValueError(f"コヒーレンスのバンド番号 s は 1 以上である必要があります (s={s})")
    if n < 2:
        raise ValueError(f"準位数 N は 2 以上である必要があります (N={n})")
    g2 = 2.0 * params.gamma
    n_th = params.n_th
    levels = np.arange(n, dtype=float)
    diag = -g2 * (levels * (1.0 + 2.0 * n_th) + n_th + 0.5 * s * (2.0 * n_th + 1.0))
    upper = g2 * (1.0 + n_th) * levels[1:]
    lower = g2 * n_th * (levels[1:] + s)
    return TridiagonalGenerator(
        diag=diag,
        upper=upper,
        lower=lower,
        s=int(s),
        phase_rate=params.omega0 * s,
        boundary_outflow=g2 * n_th * (n + s),
    )


def symmetrize(gen: TridiagonalGenerator) -> SymmetrizedGenerator:
    """Diagonal similarity to a symmetric tridiagonal matrix with the same spectrum."""
    products = gen.upper * gen.lower
    if np.any(products <= 0):
        first = int(np.argmax(products <= 0))
        raise SymmetrizationError(f"結合係数の積が 0 です (k={first})")
    offdiag = np.sqrt(products)
    log_steps = 0.5 * (np.log(gen.upper) - np.log(gen.lower))
    log_scale = np.concatenate(([0.0], np.cumsum(log_steps)))
    return SymmetrizedGenerator(diag=gen.diag, offdiag=offdiag, log_scale=log_scale)
