"""Data export helpers: trajectories, distances and reports as CSV/JSON."""
from __future__ import annotations

import io
import json
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from . import TimeUnits
from .analysis import DistanceTrajectory
from .evolve import Trajectory


FLOAT_FORMAT = "%.17g"
DEFAULT_COLUMNS = 10


def _time_columns(traj_times: np.ndarray, gamma: float) -> Dict[str, np.ndarray]:
    return {"t": traj_times, "gamma_t": gamma * traj_times}


def trajectory_frame(traj: Trajectory, gamma: float, columns: int = DEFAULT_COLUMNS) -> pd.DataFrame:
    """Columns ``t, gamma_t, P_0..P_{k-1}``, then ``mass_deficit`` and band moduli ``|ρ_{0,s}|``."""
    if columns < 1:
        raise ValueError("columns は 1 以上である必要があります")
    data: Dict[str, np.ndarray] = _time_columns(traj.grid.times, gamma)
    for n in range(min(columns, traj.n_max)):
        data[f"P_{n}"] = traj.populations[:, n]
    data["mass_deficit"] = traj.mass_deficit
    for s, values in traj.bands.items():
        data[f"abs_rho_0_{s}"] = np.abs(values[:, 0])
    return pd.DataFrame(data)


def distance_frame(
    distances: Mapping[str, DistanceTrajectory],
    gamma: float,
) -> pd.DataFrame:
    """One ``D_<state>`` column per named distance trajectory on a shared grid."""
    if not distances:
        raise ValueError("距離の系列がありません")
    first = next(iter(distances.values()))
    data: Dict[str, np.ndarray] = _time_columns(first.grid.times, gamma)
    for name, traj in distances.items():
        if not traj.grid.same_as(first.grid):
            raise ValueError(f"状態 {name} の時間グリッドが一致しません")
        data[f"D_{name}"] = traj.values
    return pd.DataFrame(data)


def rate_entry(traj: DistanceTrajectory, gamma: float, units: TimeUnits = "gamma-t") -> Dict[str, object]:
    """Fit summary of one distance curve, with rates in ``γ`` units unless ``units='physical'``."""
    scale = gamma if units == "gamma-t" else 1.0
    window: Optional[List[float]] = None
    if traj.fit_window is not None:
        window = [bound * scale for bound in traj.fit_window]
    return {
        "measure": traj.measure,
        "rate": None if traj.fitted_rate is None else traj.fitted_rate / scale,
        "fit_r2": traj.fit_r2,
        "fit_window": window,
    }


def _clean(value):
    if isinstance(value, dict):
        return {str(key): _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def report_to_json(report: Mapping[str, object]) -> bytes:
    """Serialize a report dictionary deterministically."""
    return json.dumps(_clean(dict(report)), ensure_ascii=False, indent=2, sort_keys=True).encode("utf-8")


def dataframe_to_csv(df: pd.DataFrame) -> bytes:
    """Serialize a DataFrame to CSV bytes with round-trip float precision."""
    buffer = io.StringIO()
    df.to_csv(buffer, index=False, float_format=FLOAT_FORMAT)
    return buffer.getvalue().encode("utf-8")


def write_output(path: Path, payload: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return path
