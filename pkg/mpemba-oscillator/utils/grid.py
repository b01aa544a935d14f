"""Time-grid helpers shared by the propagators, the analysis and the CLI."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from . import TimeUnits

MIN_SAMPLES = 16


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, nonnegative sampling times in physical units."""

    times: np.ndarray

    def __post_init__(self) -> None:
        times = validate_times(self.times)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return int(self.times.size)

    def gamma_t(self, gamma: float) -> np.ndarray:
        """Dimensionless time ``γt`` used on every figure axis."""
        return gamma * self.times

    def same_as(self, other: "TimeGrid") -> bool:
        return self.times.shape == other.times.shape and bool(np.array_equal(self.times, other.times))


def validate_times(times: Iterable[float]) -> np.ndarray:
    """Return the times as an array, checking order and sign."""
    values = np.array(list(times) if not isinstance(times, np.ndarray) else times, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("時間グリッドは 1 次元で空でない必要があります")
    if values[0] < 0:
        raise ValueError("時間グリッドの開始時刻は 0 以上である必要があります")
    if np.any(np.diff(values) <= 0):
        raise ValueError("時間グリッドは狭義単調増加である必要があります")
    return values


def validate_range(t_end: float, samples: int) -> Tuple[float, int]:
    """Check the ``t_end``/``samples`` pair of a scenario grid."""
    if not t_end > 0:
        raise ValueError(f"t_end は正の値である必要があります (t_end={t_end})")
    if int(samples) < MIN_SAMPLES:
        raise ValueError(f"samples は {MIN_SAMPLES} 以上である必要があります (samples={samples})")
    return float(t_end), int(samples)


def make_time_grid(
    t_end: float,
    samples: int,
    gamma: float = 1.0,
    units: TimeUnits = "gamma-t",
) -> TimeGrid:
    """Uniform grid on ``[0, t_end]``; ``t_end`` is read as ``γt`` unless ``units='physical'``."""
    t_end, samples = validate_range(t_end, samples)
    if units == "gamma-t":
        t_end = t_end / gamma
    elif units != "physical":
        raise ValueError(f"不明な時間単位です: {units}")
    return TimeGrid(np.linspace(0.0, t_end, samples))


def report_times(grid: TimeGrid, gamma: float, units: TimeUnits = "gamma-t") -> np.ndarray:
    """Times in the unit the user asked for."""
    return grid.gamma_t(gamma) if units == "gamma-t" else grid.times.copy()


def tail_window(
    values: np.ndarray,
    window_fraction: float,
    floor: float,
) -> Optional[np.ndarray]:
    """Indices of the final ``window_fraction`` of the finite samples lying above ``floor``."""
    if not 0 < window_fraction < 1:
        raise ValueError("window_fraction は (0, 1) の範囲である必要があります")
    usable = np.flatnonzero(np.isfinite(values) & (values > floor))
    if usable.size == 0:
        return None
    count = max(int(round(window_fraction * usable.size)), 1)
    return usable[-count:]
