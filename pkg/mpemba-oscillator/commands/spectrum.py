"""Analytic versus truncated-numerical spectrum, and raw generator dumps."""
from __future__ import annotations

import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.linalg import eigvalsh_tridiagonal

from utils.generator import (
    SymmetrizationError,
    TridiagonalGenerator,
    coherence_generator,
    population_generator,
    symmetrize,
)
from utils.io import dataframe_to_csv
from utils.model import BathParams
from utils.spectral import coherence_eigenvalue, population_eigenvalue

logger = logging.getLogger(__name__)

DEFAULT_SPECTRUM_N = 400
SPECTRUM_COLUMNS = [
    "alpha",
    "s",
    "analytic_re",
    "analytic_im",
    "numeric_re",
    "numeric_im",
    "abs_deviation",
]


def numerical_decay_rates(gen: TridiagonalGenerator, count: int) -> np.ndarray:
    """Real eigenvalues of a truncated generator closest to zero, in descending order."""
    try:
        sym = symmetrize(gen)
        eigvals = eigvalsh_tridiagonal(sym.diag, sym.offdiag)
    except SymmetrizationError:
        # one-sided couplings (n_th = 0) leave a triangular matrix
        logger.info("symmetrization unavailable for s=%d; using the diagonal", gen.s)
        eigvals = np.sort(gen.diag)
    return np.sort(eigvals)[::-1][:count]


def spectrum_table(params: BathParams, alpha_max: int, s_max: int, n: int = DEFAULT_SPECTRUM_N) -> pd.DataFrame:
    """Rows ``(α, s)`` for ``0 ≤ α ≤ alpha_max``, ``0 ≤ s ≤ s_max``."""
    if alpha_max < 0 or s_max < 0:
        raise ValueError("alpha_max と s_max は 0 以上である必要があります")
    if n - s_max < alpha_max + 2:
        raise ValueError(f"準位数 N={n} が alpha_max, s_max に対して小さすぎます")
    rows: List[Dict[str, float]] = []
    for s in range(s_max + 1):
        if s == 0:
            gen = population_generator(params, n)
        else:
            gen = coherence_generator(params, s, n - s)
        numeric = numerical_decay_rates(gen, alpha_max + 1)
        for alpha in range(alpha_max + 1):
            if s == 0:
                analytic = complex(population_eigenvalue(alpha, params.gamma))
            else:
                analytic = coherence_eigenvalue(alpha, s, params)
            value = complex(numeric[alpha], gen.phase_rate)
            rows.append(
                {
                    "alpha": alpha,
                    "s": s,
                    "analytic_re": analytic.real,
                    "analytic_im": analytic.imag,
                    "numeric_re": value.real,
                    "numeric_im": value.imag,
                    "abs_deviation": abs(value - analytic),
                }
            )
    return pd.DataFrame(rows, columns=SPECTRUM_COLUMNS)


def generator_table(params: BathParams, s: int, n: int) -> pd.DataFrame:
    """Diagonal and couplings of the band-``s`` generator; the last row has no couplings."""
    gen = population_generator(params, n) if s == 0 else coherence_generator(params, s, n - s)
    size = gen.size
    upper = np.full(size, np.nan)
    lower = np.full(size, np.nan)
    upper[:-1] = gen.upper
    lower[:-1] = gen.lower
    return pd.DataFrame({"n": np.arange(size), "diag": gen.diag, "upper": upper, "lower": lower})


def spectrum_command(
    params: BathParams,
    alpha_max: int,
    s_max: int,
    n: int = DEFAULT_SPECTRUM_N,
    dump_generator: Optional[int] = None,
) -> bytes:
    """CSV bytes of the spectrum table, or of one band generator when ``dump_generator`` is set."""
    if dump_generator is not None:
        frame = generator_table(params, dump_generator, n)
    else:
        frame = spectrum_table(params, alpha_max, s_max, n)
    logger.info("spectrum: %d rows (N=%d)", len(frame), n)
    return dataframe_to_csv(frame)
