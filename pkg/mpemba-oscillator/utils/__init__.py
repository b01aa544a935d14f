"""Utility package exports for the damped-oscillator relaxation toolkit."""
from __future__ import annotations

from typing import List, Literal, TypedDict

StateKind = Literal[
    "thermal",
    "two_point",
    "fock",
    "power_law",
    "pure_superposition",
    "explicit",
    "matched",
]
MeasureName = Literal["kl", "trace", "hs"]
PropagationMethod = Literal["spectral", "ode"]
TimeUnits = Literal["gamma-t", "physical"]


class BathSpec(TypedDict, total=False):
    """Bath parameters as written in a scenario document.

    Either ``n_th`` or the temperature ratio ``x`` must be given.
    """

    gamma: float
    omega0: float
    n_th: float
    x: float


class StateSpec(TypedDict, total=False):
    """Type definition for a named initial state in a scenario document."""

    name: str
    kind: StateKind
    n_th: float
    n1: int
    n: int
    n_max: int
    probs: List[float]
    r: int
    support: List[int]


class GridSpec(TypedDict, total=False):
    """Sampling of the time axis."""

    t_end: float
    samples: int


class FitSpec(TypedDict, total=False):
    """Decay-rate fit settings: trailing window share and the distance floor."""

    window_fraction: float
    floor: float


class ScenarioSpec(TypedDict, total=False):
    """Type definition for a complete scenario document."""

    name: str
    bath: BathSpec
    states: List[StateSpec]
    grid: GridSpec
    units: TimeUnits
    measures: List[MeasureName]
    pairs: List[List[str]]
    method: PropagationMethod
    n_max_override: int
    tail_tol: float
    columns: int
    fit: FitSpec
