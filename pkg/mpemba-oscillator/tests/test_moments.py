"""Tests for the moment chains, acceleration orders and matched states."""
from __future__ import annotations

import numpy as np
import pytest

from utils.evolve import propagate
from utils.grid import make_time_grid
from utils.model import (
    BathParams,
    TruncationPolicy,
    as_density,
    fock_population,
    power_law_population,
    pure_superposition_state,
    thermal_population,
    two_point_population,
)
from utils.moments import (
    InfeasibleSupportError,
    MomentVector,
    acceleration_order,
    coherence_moments,
    construct_matched_state,
    evolve_coherence_moments,
    evolve_population_moments,
    matched_order,
    moment_coupling_matrix,
    population_moments,
    stationary_moments,
)

POLICY = TruncationPolicy()


def test_population_moments_of_simple_states() -> None:
    thermal = thermal_population(2.0, POLICY, n_states=200)
    assert population_moments(thermal, 1)[1] == pytest.approx(2.0)
    assert population_moments(two_point_population(2.5, 6, POLICY), 2)[2] == pytest.approx(15.0)
    assert population_moments(fock_population(1, POLICY), 3)[3] == pytest.approx(1.0)


@pytest.mark.parametrize(
    "n_th, expected",
    [
        (1.0, [1.0, 1.0, 3.0, 13.0]),
        (2.5, [1.0, 2.5, 15.0, 133.75]),
        (0.0, [1.0, 0.0, 0.0, 0.0]),
    ],
)
def test_stationary_moments(n_th: float, expected: list) -> None:
    assert np.allclose(stationary_moments(n_th, 3).values, expected, rtol=1e-14)


def test_stationary_moments_match_the_geometric_sum() -> None:
    thermal = thermal_population(1.5, POLICY, n_states=400)
    assert np.allclose(
        population_moments(thermal, 6).values, stationary_moments(1.5, 6).values, rtol=1e-10
    )


def test_coupling_matrix_rows() -> None:
    coupling = moment_coupling_matrix(2.0, 0, 3)
    assert np.allclose(coupling[2, :3], [2.0, 9.0, -2.0])
    assert np.allclose(np.diag(moment_coupling_matrix(2.0, 3, 4)), [-1.5, -2.5, -3.5, -4.5, -5.5])
    assert np.allclose(np.triu(coupling, 1), 0.0)


def test_order_limit_is_enforced() -> None:
    with pytest.raises(ValueError):
        stationary_moments(1.0, 13)


def test_stationary_moments_are_a_fixed_point() -> None:
    grid = make_time_grid(3.0, 31)
    q0 = stationary_moments(2.0, 6)
    for q in evolve_population_moments(q0, 2.0, 1.0, grid):
        assert np.allclose(q.values, q0.values, rtol=1e-12)


def test_matched_mean_stays_put_and_second_moment_relaxes_at_four_gamma() -> None:
    grid = make_time_grid(2.0, 21)
    q0 = population_moments(two_point_population(2.0, 4, POLICY), 2)
    path = evolve_population_moments(q0, 2.0, 1.0, grid)
    for t, q in zip(grid.times, path):
        assert q[0] == pytest.approx(1.0, abs=1e-14)
        assert q[1] == pytest.approx(2.0, abs=1e-12)
        assert q[2] == pytest.approx(10.0 - 2.0 * np.exp(-4.0 * t), abs=1e-12)


def test_unmatched_mean_relaxes_at_two_gamma() -> None:
    gamma = 0.5
    grid = make_time_grid(3.0, 31, gamma=gamma)
    path = evolve_population_moments(population_moments(fock_population(5, POLICY), 1), 2.0, gamma, grid)
    means = np.array([q[1] for q in path])
    assert np.allclose(means, 2.0 + 3.0 * np.exp(-2.0 * gamma * grid.times), atol=1e-12)


def test_moment_chain_matches_propagated_states() -> None:
    bath = BathParams(gamma=1.0, omega0=1.0, n_th=2.0)
    grid = make_time_grid(3.0, 31)
    for p0 in (fock_population(2, POLICY).resized(150), thermal_population(3.0, POLICY, n_states=150)):
        traj = propagate(p0, bath, grid)
        chain = evolve_population_moments(population_moments(p0, 6), bath.n_th, bath.gamma, grid)
        for k, q in enumerate(chain):
            direct = population_moments(traj.population(k), 6).values
            assert np.allclose(direct, q.values, rtol=1e-8, atol=1e-10)


def test_coherence_moments() -> None:
    rho = pure_superposition_state(2.0, 4, POLICY)
    assert coherence_moments(rho, 4, 0)[0] == pytest.approx(np.sqrt(24.0) * 0.5)
    assert not np.any(coherence_moments(rho, 3, 4).values)
    diagonal = as_density(fock_population(2, POLICY))
    assert not np.any(coherence_moments(diagonal, 1, 4).values)


def test_coherence_total_decays_at_gamma_s() -> None:
    gamma, s = 0.5, 4
    grid = make_time_grid(2.0, 21, gamma=gamma)
    q0 = MomentVector(s=s, values=[2.0 + 1.0j, 0.5, 0.0])
    path = evolve_coherence_moments(q0, s, 2.0, gamma, grid, omega0=3.0)
    for t, q in zip(grid.times, path):
        assert abs(q[0]) == pytest.approx(abs(q0[0]) * np.exp(-gamma * s * t), rel=1e-12)
    assert path[-1][0] == pytest.approx(
        q0[0] * np.exp(-gamma * s * grid.times[-1] + 3j * s * grid.times[-1]), rel=1e-12
    )


def test_vanishing_low_coherence_moments_give_faster_decay() -> None:
    grid = make_time_grid(2.0, 21)
    q0 = MomentVector(s=2, values=[0.0, 1.0, 0.0])
    path = evolve_coherence_moments(q0, 2, 1.0, 1.0, grid)
    assert np.allclose([q[0] for q in path], 0.0)
    assert np.allclose([q[1] for q in path], np.exp(-4.0 * grid.times), rtol=1e-12)


def test_zero_coherence_moments_stay_zero() -> None:
    grid = make_time_grid(1.0, 16)
    path = evolve_coherence_moments(MomentVector(s=1, values=[0, 0, 0]), 1, 2.0, 1.0, grid)
    assert all(not np.any(q.values) for q in path)


def test_band_mismatch_is_rejected() -> None:
    grid = make_time_grid(1.0, 16)
    with pytest.raises(ValueError):
        evolve_coherence_moments(MomentVector(s=2, values=[1.0]), 3, 1.0, 1.0, grid)
    with pytest.raises(ValueError):
        evolve_population_moments(MomentVector(s=2, values=[1.0]), 1.0, 1.0, grid)


@pytest.mark.parametrize(
    "state, n_th, r, h",
    [
        (two_point_population(2.5, 4, POLICY), 2.5, 1, 4),
        (two_point_population(2.5, 6, POLICY), 2.5, 2, 6),
        (fock_population(1, POLICY), 2.5, 0, 2),
        (fock_population(3, POLICY), 0.0, 0, 2),
    ],
)
def test_population_acceleration_orders(state, n_th: float, r: int, h: int) -> None:
    order = acceleration_order(state, n_th)
    assert (order.r, order.h) == (r, h)
    assert order.predicted_rate == pytest.approx(float(h))


def test_superposition_rate_is_limited_by_population_or_band() -> None:
    order = acceleration_order(pure_superposition_state(2.0, 4, POLICY), 2.0, gamma=0.5)
    assert (order.r, order.h, order.band_orders) == (1, 4, {})
    assert order.predicted_rate == pytest.approx(2.0)
    narrow = acceleration_order(pure_superposition_state(2.0, 3, POLICY), 2.0)
    assert narrow.band_orders == {3: 0}
    assert narrow.h == 3


def test_acceleration_order_rejects_bad_input() -> None:
    with pytest.raises(ValueError):
        acceleration_order(power_law_population(POLICY, n_states=128), 2.0)
    with pytest.raises(ValueError):
        acceleration_order(fock_population(1, POLICY), 2.0, h_max=0)


def test_thermal_state_is_matched_to_every_probed_order() -> None:
    thermal = thermal_population(1.0, POLICY, n_states=400)
    assert matched_order(thermal, 1.0, 6) == 6


def test_two_point_closed_forms() -> None:
    first = construct_matched_state(2.0, 1, [0, 5])
    assert first.probs[5] == pytest.approx(0.4)
    second = construct_matched_state(2.5, 2, [0, 6])
    assert second.probs[6] == pytest.approx(5.0 / 12.0)
    assert matched_order(second, 2.5, 3) == 2


def test_infeasible_supports_are_rejected() -> None:
    with pytest.raises(InfeasibleSupportError):
        construct_matched_state(2.0, 2, [0, 1])
    with pytest.raises(InfeasibleSupportError):
        construct_matched_state(2.0, 2, [0, 4])
    with pytest.raises(ValueError):
        construct_matched_state(2.0, 3, [0, 1, 2])


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_matched_states_on_a_wide_support(r: int) -> None:
    support = list(range(20))
    state = construct_matched_state(1.0, r, support)
    assert state.probs.min() >= 0.0
    assert state.mass == pytest.approx(1.0, abs=1e-12)
    assert matched_order(state, 1.0, r + 1) == r
    assert acceleration_order(state, 1.0).h == 2 * (r + 1)
    assert np.count_nonzero(state.probs) <= r + 1
