"""Moment summary of every initial state of a scenario."""
from __future__ import annotations

from typing import Dict, List

from utils.model import DensityState, as_density
from utils.moments import (
    acceleration_order,
    coherence_moments,
    population_moments,
    stationary_moments,
)
from utils.scenarios import Scenario, build_state

DEFAULT_L_MAX = 6


def _pair(value: complex) -> List[float]:
    return [float(value.real), float(value.imag)]


def moments_report(scenario: Scenario, l_max: int = DEFAULT_L_MAX) -> Dict[str, object]:
    """``Q_l(0)``, ``Q_l^(S)``, matched order and predicted rate per state."""
    bath = scenario.bath
    policy = scenario.policy()
    thermal = stationary_moments(bath.n_th, l_max)
    states: Dict[str, object] = {}
    for spec in scenario.states:
        state = build_state(spec, bath, policy)
        rho: DensityState = as_density(state)
        entry: Dict[str, object] = {
            "kind": spec["kind"],
            "finite_moments": rho.diag.finite_moments,
            "Q": [float(q) for q in population_moments(rho.diag, l_max).values],
            "coherence": {
                str(s): [_pair(q) for q in coherence_moments(rho, s, l_max).values] for s in rho.bands
            },
        }
        if rho.diag.finite_moments:
            order = acceleration_order(rho, bath.n_th, gamma=bath.gamma)
            entry.update(
                {
                    "r": order.r,
                    "h": order.h,
                    "predicted_rate": order.predicted_rate / bath.gamma,
                }
            )
        states[spec["name"]] = entry
    return {
        "scenario": scenario.name,
        "n_th": bath.n_th,
        "l_max": l_max,
        "Q_thermal": [float(q) for q in thermal.values],
        "rate_units": "gamma",
        "states": states,
    }
