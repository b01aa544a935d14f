"""Scenario documents: loading, validation and construction of the initial states."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from . import MeasureName, PropagationMethod, StateSpec, TimeUnits
from .analysis import DEFAULT_FIT_FLOOR, DEFAULT_WINDOW_FRACTION
from .grid import validate_range
from .model import (
    DEFAULT_TAIL_TOL,
    BathParams,
    DensityState,
    PopulationState,
    TruncationPolicy,
    fock_population,
    make_bath,
    power_law_population,
    pure_superposition_state,
    thermal_population,
    thermal_size,
    two_point_population,
)
from .moments import construct_matched_state

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "scenarios"
BUILTIN_SCENARIOS = ("fig2", "fig3", "fig4", "ladder")
DEFAULT_POWER_LAW_N = 1800
DEFAULT_COLUMNS = 10

REQUIRED_SCENARIO_FIELDS = ["bath", "states", "grid"]
REQUIRED_STATE_FIELDS: Dict[str, List[str]] = {
    "thermal": ["n_th"],
    "two_point": ["n1"],
    "fock": ["n"],
    "power_law": [],
    "pure_superposition": ["n1"],
    "explicit": ["probs"],
    "matched": ["r", "support"],
}
MEASURE_NAMES = ("kl", "trace", "hs")
METHOD_NAMES = ("spectral", "ode")
UNIT_NAMES = ("gamma-t", "physical")

InitialState = Union[PopulationState, DensityState]


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; ``t_end`` is in the scenario's ``units``."""

    name: str
    bath: BathParams
    states: List[StateSpec]
    t_end: float
    samples: int
    units: TimeUnits = "gamma-t"
    measures: List[MeasureName] = field(default_factory=lambda: ["kl"])
    pairs: List[Tuple[str, str]] = field(default_factory=list)
    method: PropagationMethod = "spectral"
    n_max_override: Optional[int] = None
    tail_tol: float = DEFAULT_TAIL_TOL
    columns: int = DEFAULT_COLUMNS
    window_fraction: float = DEFAULT_WINDOW_FRACTION
    fit_floor: float = DEFAULT_FIT_FLOOR

    @property
    def state_names(self) -> List[str]:
        return [spec["name"] for spec in self.states]

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(tail_tol=self.tail_tol)

    def with_overrides(
        self,
        n_max: Optional[int] = None,
        measures: Optional[List[MeasureName]] = None,
        units: Optional[TimeUnits] = None,
        method: Optional[PropagationMethod] = None,
    ) -> "Scenario":
        """Apply command-line flags on top of the document."""
        updates: Dict[str, object] = {}
        if n_max is not None:
            updates["n_max_override"] = _positive_int(n_max, "n_max_override")
        if measures:
            updates["measures"] = _measures(measures)
        if units is not None:
            updates["units"] = _choice(units, UNIT_NAMES, "units")
        if method is not None:
            updates["method"] = _choice(method, METHOD_NAMES, "method")
        return replace(self, **updates) if updates else self


def _positive_int(value: object, label: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value < 1:
        raise ValueError(f"{label} は正の整数である必要があります ({label}={value!r})")
    return int(value)


def _number(value: object, label: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{label} は数値である必要があります ({label}={value!r})")
    return float(value)


def _choice(value: object, allowed: Tuple[str, ...], label: str) -> str:
    if value not in allowed:
        raise ValueError(f"{label} は {', '.join(allowed)} のいずれかである必要があります ({value!r})")
    return str(value)


def _measures(values: object) -> List[MeasureName]:
    if not isinstance(values, list) or not values:
        raise ValueError("measures は空でないリストである必要があります")
    return [_choice(value, MEASURE_NAMES, "measures") for value in values]  # type: ignore[misc]


def _parse_bath(doc: object) -> BathParams:
    if not isinstance(doc, Mapping):
        raise ValueError("bath はオブジェクトである必要があります")
    gamma = _number(doc.get("gamma", 1.0), "bath.gamma")
    omega0 = _number(doc.get("omega0", 1.0), "bath.omega0")
    if ("n_th" in doc) == ("x" in doc):
        raise ValueError("bath には n_th と x のどちらか一方だけを指定してください")
    if "x" in doc:
        return BathParams.from_temperature_ratio(gamma, omega0, _number(doc["x"], "bath.x"))
    return make_bath(gamma, omega0, _number(doc["n_th"], "bath.n_th"))


def _parse_state(doc: object, index: int) -> StateSpec:
    if not isinstance(doc, Mapping):
        raise ValueError(f"states[{index}] はオブジェクトである必要があります")
    kind = doc.get("kind")
    if kind not in REQUIRED_STATE_FIELDS:
        raise ValueError(f"states[{index}] の kind が不正です: {kind!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ValueError(f"states[{index}] には name が必要です")
    missing = [key for key in REQUIRED_STATE_FIELDS[kind] if key not in doc]
    if missing:
        raise ValueError(f"状態 {name} に必要な項目が足りません: {', '.join(missing)}")
    spec: StateSpec = {"name": name, "kind": kind}
    if "n_th" in doc:
        spec["n_th"] = _number(doc["n_th"], f"{name}.n_th")
    for key in ("n1", "r", "n_max"):
        if key in doc:
            spec[key] = _positive_int(doc[key], f"{name}.{key}")
    if "n" in doc:
        n = doc["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise ValueError(f"{name}.n は 0 以上の整数である必要があります")
        spec["n"] = n
    if "probs" in doc:
        probs = doc["probs"]
        if not isinstance(probs, list) or not probs:
            raise ValueError(f"{name}.probs は空でないリストである必要があります")
        spec["probs"] = [_number(value, f"{name}.probs") for value in probs]
    if "support" in doc:
        support = doc["support"]
        if not isinstance(support, list) or not all(isinstance(n, int) and n >= 0 for n in support):
            raise ValueError(f"{name}.support は 0 以上の整数のリストである必要があります")
        spec["support"] = list(support)
    return spec


def parse_scenario(doc: Mapping[str, object], default_name: str = "scenario") -> Scenario:
    """Validate a scenario document and return a :class:`Scenario`."""
    if not isinstance(doc, Mapping):
        raise ValueError("シナリオはオブジェクトである必要があります")
    missing = [key for key in REQUIRED_SCENARIO_FIELDS if key not in doc]
    if missing:
        raise ValueError(f"シナリオに必要な項目が足りません: {', '.join(missing)}")
    bath = _parse_bath(doc["bath"])
    raw_states = doc["states"]
    if not isinstance(raw_states, list) or not raw_states:
        raise ValueError("states には少なくとも 1 つの状態が必要です")
    states = [_parse_state(item, idx) for idx, item in enumerate(raw_states)]
    names = [spec["name"] for spec in states]
    if len(set(names)) != len(names):
        raise ValueError("状態の name が重複しています")
    grid = doc["grid"]
    if not isinstance(grid, Mapping) or "t_end" not in grid or "samples" not in grid:
        raise ValueError("grid には t_end と samples が必要です")
    t_end, samples = validate_range(
        _number(grid["t_end"], "grid.t_end"), _positive_int(grid["samples"], "grid.samples")
    )
    pairs: List[Tuple[str, str]] = []
    for pair in doc.get("pairs", []):  # type: ignore[union-attr]
        if not isinstance(pair, list) or len(pair) != 2 or not all(name in names for name in pair):
            raise ValueError(f"pairs の要素が不正です: {pair!r}")
        pairs.append((pair[0], pair[1]))
    if not pairs and len(names) >= 2 and "pairs" not in doc:
        pairs.append((names[0], names[1]))
    tail_tol = _number(doc.get("tail_tol", DEFAULT_TAIL_TOL), "tail_tol")
    if not 0 < tail_tol < 1e-3:
        raise ValueError(f"tail_tol は (0, 1e-3) の範囲である必要があります (tail_tol={tail_tol})")
    fit = doc.get("fit", {})
    if not isinstance(fit, Mapping):
        raise ValueError("fit はオブジェクトである必要があります")
    window_fraction = _number(fit.get("window_fraction", DEFAULT_WINDOW_FRACTION), "fit.window_fraction")
    if not 0 < window_fraction < 1:
        raise ValueError(f"fit.window_fraction は (0, 1) の範囲である必要があります ({window_fraction})")
    fit_floor = _number(fit.get("floor", DEFAULT_FIT_FLOOR), "fit.floor")
    if not fit_floor > 0:
        raise ValueError(f"fit.floor は正の値である必要があります ({fit_floor})")
    n_max_override = doc.get("n_max_override")
    name = doc.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise ValueError("name は空でない文字列である必要があります")
    return Scenario(
        name=name,
        bath=bath,
        states=states,
        t_end=t_end,
        samples=samples,
        units=_choice(doc.get("units", "gamma-t"), UNIT_NAMES, "units"),  # type: ignore[arg-type]
        measures=_measures(doc.get("measures", ["kl"])),
        pairs=pairs,
        method=_choice(doc.get("method", "spectral"), METHOD_NAMES, "method"),  # type: ignore[arg-type]
        n_max_override=None if n_max_override is None else _positive_int(n_max_override, "n_max_override"),
        tail_tol=tail_tol,
        columns=_positive_int(doc.get("columns", DEFAULT_COLUMNS), "columns"),
        window_fraction=window_fraction,
        fit_floor=fit_floor,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ValueError(f"シナリオファイルが見つかりません: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"シナリオファイルの JSON が不正です: {path} ({exc.msg})") from exc
    return parse_scenario(doc, default_name=path.stem)


def builtin_scenario(name: str) -> Scenario:
    """One of the bundled scenarios under ``data/scenarios``."""
    if name not in BUILTIN_SCENARIOS:
        raise ValueError(f"組み込みシナリオ {name!r} はありません ({', '.join(BUILTIN_SCENARIOS)})")
    return load_scenario(DATA_DIR / f"{name}.json")


def build_state(spec: StateSpec, bath: BathParams, policy: TruncationPolicy) -> InitialState:
    """Initial state at its natural truncation; moment-matched kinds use the bath's ``n_th``."""
    kind = spec["kind"]
    if kind == "thermal":
        return thermal_population(spec["n_th"], policy)
    if kind == "two_point":
        return two_point_population(bath.n_th, spec["n1"], policy)
    if kind == "fock":
        return fock_population(spec["n"], policy)
    if kind == "power_law":
        return power_law_population(policy, n_states=spec.get("n_max", DEFAULT_POWER_LAW_N))
    if kind == "pure_superposition":
        return pure_superposition_state(bath.n_th, spec["n1"], policy)
    if kind == "explicit":
        return PopulationState.from_probs(spec["probs"], tail_tol=policy.tail_tol)
    if kind == "matched":
        return construct_matched_state(bath.n_th, spec["r"], spec["support"], tail_tol=policy.tail_tol)
    raise ValueError(f"不明な状態の種類です: {kind}")


def build_states(scenario: Scenario) -> Tuple[Dict[str, InitialState], int]:
    """All initial states on one common truncation ``N``, which is also returned."""
    policy = scenario.policy()
    natural = {spec["name"]: build_state(spec, scenario.bath, policy) for spec in scenario.states}
    if scenario.n_max_override is not None:
        n_run = scenario.n_max_override
    else:
        required = max(
            [state.n_max for state in natural.values()]
            + [thermal_size(scenario.bath.n_th, policy.tail_tol)]
        )
        n_run = policy.run_size(required)
    logger.info("scenario %s: truncation N=%d", scenario.name, n_run)
    states: Dict[str, InitialState] = {}
    for spec in scenario.states:
        name = spec["name"]
        if spec["kind"] == "thermal":
            states[name] = thermal_population(spec["n_th"], policy, n_states=n_run)
        else:
            states[name] = natural[name].resized(n_run)
    return states, n_run
