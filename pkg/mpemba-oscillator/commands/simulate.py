"""Scenario runner: evolve every initial state, measure distances and write the outputs."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from utils.analysis import (
    DistanceTrajectory,
    detect_crossing,
    distance_trajectory,
    fit_decay_rate,
)
from utils.evolve import Trajectory, propagate
from utils.grid import make_time_grid
from utils.io import (
    dataframe_to_csv,
    distance_frame,
    rate_entry,
    report_to_json,
    trajectory_frame,
    write_output,
)
from utils.model import DensityState
from utils.moments import acceleration_order
from utils.scenarios import InitialState, Scenario, build_states

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TRUNCATION_LIMITED = 3


@dataclass
class SimulationResult:
    """In-memory outcome of one scenario run."""

    scenario: Scenario
    n_max: int
    trajectories: Dict[str, Trajectory]
    distances: Dict[str, Dict[str, DistanceTrajectory]]
    report: Dict[str, object]
    paths: List[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_TRUNCATION_LIMITED if "warning" in self.report else EXIT_OK


def _fitted(traj: DistanceTrajectory, scenario: Scenario, label: str) -> DistanceTrajectory:
    try:
        return traj.with_fit(fit_decay_rate(traj, scenario.window_fraction, scenario.fit_floor))
    except ValueError as exc:
        logger.warning("状態 %s の減衰率を求められません: %s", label, exc)
        return traj


def _acceleration_entry(state: InitialState, scenario: Scenario) -> Optional[Dict[str, object]]:
    diag = state.diag if isinstance(state, DensityState) else state
    if not diag.finite_moments:
        return None
    order = acceleration_order(state, scenario.bath.n_th, gamma=scenario.bath.gamma)
    scale = scenario.bath.gamma if scenario.units == "gamma-t" else 1.0
    return {
        "h": order.h,
        "r": order.r,
        "band_orders": {str(s): first for s, first in order.band_orders.items()},
        "predicted_rate": order.predicted_rate / scale,
        "predicted_kl_rate": 2.0 * order.predicted_rate / scale,
    }


def evolve_states(
    states: Dict[str, InitialState],
    scenario: Scenario,
    workers: Optional[int] = None,
) -> Dict[str, Trajectory]:
    """Propagate every state on the scenario grid; states run concurrently."""
    grid = make_time_grid(scenario.t_end, scenario.samples, scenario.bath.gamma, scenario.units)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            name: executor.submit(propagate, state, scenario.bath, grid, scenario.method)
            for name, state in states.items()
        }
        trajectories = {name: future.result() for name, future in futures.items()}
    for name, traj in trajectories.items():
        logger.info("state %s: method=%s N=%d", name, traj.method, traj.n_max)
    return trajectories


def run_scenario(scenario: Scenario, workers: Optional[int] = None) -> SimulationResult:
    """Evolve, measure, fit and compare; nothing is written to disk."""
    states, n_max = build_states(scenario)
    trajectories = evolve_states(states, scenario, workers)
    bath = scenario.bath
    gamma_scale = bath.gamma if scenario.units == "gamma-t" else 1.0

    distances: Dict[str, Dict[str, DistanceTrajectory]] = {}
    for measure in scenario.measures:
        distances[measure] = {
            name: _fitted(distance_trajectory(traj, bath.n_th, measure), scenario, name)
            for name, traj in trajectories.items()
        }

    state_entries: Dict[str, object] = {}
    for spec in scenario.states:
        name = spec["name"]
        traj = trajectories[name]
        state_entries[name] = {
            "kind": spec["kind"],
            "method": traj.method,
            "fallback_reason": traj.fallback_reason,
            "truncation_limited": traj.truncation_limited,
            "max_mass_deficit": float(np.max(traj.mass_deficit)),
            "acceleration": _acceleration_entry(states[name], scenario),
            "rates": {
                measure: rate_entry(distances[measure][name], bath.gamma, scenario.units)
                for measure in scenario.measures
            },
        }

    primary = scenario.measures[0]
    crossings: List[Dict[str, object]] = []
    for first, second in scenario.pairs:
        traj_i, traj_ii = distances[primary][first], distances[primary][second]
        found = detect_crossing(traj_i, traj_ii)
        crossings.append(
            {
                "pair": [first, second],
                "measure": primary,
                "crossings": [t * gamma_scale for t in found.crossings],
                "initially_farther": found.initially_farther,
                "mpemba": found.mpemba_detected,
                "rate_I": rate_entry(traj_i, bath.gamma, scenario.units)["rate"],
                "rate_II": rate_entry(traj_ii, bath.gamma, scenario.units)["rate"],
            }
        )

    report: Dict[str, object] = {
        "scenario": scenario.name,
        "bath": {"gamma": bath.gamma, "omega0": bath.omega0, "n_th": bath.n_th},
        "n_max": n_max,
        "units": scenario.units,
        "method": scenario.method,
        "measures": list(scenario.measures),
        "states": state_entries,
        "crossings": crossings,
    }
    limited = [name for name, traj in trajectories.items() if traj.truncation_limited]
    if limited:
        report["warning"] = f"切り詰めによる質量損失が tail_tol の 10 倍を超えました: {', '.join(limited)}"
        logger.warning(report["warning"])
    return SimulationResult(
        scenario=scenario,
        n_max=n_max,
        trajectories=trajectories,
        distances=distances,
        report=report,
    )


def write_results(result: SimulationResult, out_dir: Path) -> List[Path]:
    """Per-state trajectory CSVs, one distance CSV per measure and ``report.json``."""
    target = Path(out_dir) / result.scenario.name
    gamma = result.scenario.bath.gamma
    paths: List[Path] = []
    for name, traj in result.trajectories.items():
        frame = trajectory_frame(traj, gamma, result.scenario.columns)
        paths.append(write_output(target / f"trajectory_{name}.csv", dataframe_to_csv(frame)))
    for measure, per_state in result.distances.items():
        frame = distance_frame(per_state, gamma)
        paths.append(write_output(target / f"distances_{measure}.csv", dataframe_to_csv(frame)))
    paths.append(write_output(target / "report.json", report_to_json(result.report)))
    for path in paths:
        logger.info("wrote %s", path)
    result.paths = paths
    return paths


def simulate_command(scenario: Scenario, out_dir: Path, workers: Optional[int] = None) -> SimulationResult:
    """Run a scenario and write its outputs."""
    result = run_scenario(scenario, workers)
    write_results(result, out_dir)
    return result
