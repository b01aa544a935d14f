"""Unit tests for the truncated generators and their symmetrization."""
from __future__ import annotations

import numpy as np
import pytest

from utils.generator import (
    SymmetrizationError,
    coherence_generator,
    population_generator,
    symmetrize,
)
from utils.model import BathParams, thermal_probs

BATH = BathParams(gamma=1.0, omega0=2.0, n_th=2.0)


def test_population_columns_conserve_probability_except_at_the_boundary() -> None:
    gen = population_generator(BATH, 40)
    sums = gen.column_sums()
    assert np.max(np.abs(sums[:-1])) < 1e-12
    assert sums[-1] == pytest.approx(-gen.boundary_outflow)
    assert gen.boundary_outflow == pytest.approx(BATH.w_up * 40)


def test_thermal_distribution_is_stationary_away_from_the_boundary() -> None:
    n = 60
    gen = population_generator(BATH, n)
    flow = gen.matvec(thermal_probs(BATH.n_th, n))
    assert np.max(np.abs(flow[:-1])) < 1e-13


def test_matvec_matches_dense_matrix() -> None:
    gen = coherence_generator(BATH, 3, 15)
    vec = np.linspace(-1.0, 1.0, 15) + 0.5j
    assert np.allclose(gen.matvec(vec), gen.to_dense() @ vec, atol=1e-12)


def test_coherence_generator_entries() -> None:
    bath = BathParams(gamma=1.0, omega0=5.0, n_th=1.0)
    gen = coherence_generator(bath, 2, 10)
    assert gen.diag[0] == pytest.approx(-8.0)
    assert gen.upper[0] == pytest.approx(4.0)
    assert gen.lower[0] == pytest.approx(6.0)
    assert gen.phase_rate == pytest.approx(10.0)


def test_symmetrization_is_a_similarity_transform() -> None:
    gen = population_generator(BATH, 12)
    sym = symmetrize(gen)
    dense = sym.to_dense()
    assert np.allclose(dense, dense.T)
    scale = sym.scale
    rebuilt = dense * scale[None, :] / scale[:, None]
    assert np.allclose(rebuilt, gen.to_dense(), rtol=1e-12, atol=1e-12)
    exact = np.sort(np.linalg.eigvals(gen.to_dense()).real)
    assert np.allclose(np.linalg.eigvalsh(dense), exact, atol=1e-9)


def test_zero_temperature_cannot_be_symmetrized() -> None:
    gen = population_generator(BathParams(gamma=1.0, omega0=1.0, n_th=0.0), 8)
    with pytest.raises(SymmetrizationError):
        symmetrize(gen)
    assert issubclass(SymmetrizationError, ValueError)


@pytest.mark.parametrize("s, n", [(0, 10), (2, 1)])
def test_invalid_coherence_generators_are_rejected(s: int, n: int) -> None:
    with pytest.raises(ValueError):
        coherence_generator(BATH, s, n)


def test_sup_norm_is_the_largest_row_sum() -> None:
    gen = population_generator(BATH, 6)
    assert gen.sup_norm() == pytest.approx(np.max(np.abs(gen.to_dense()).sum(axis=1)))
