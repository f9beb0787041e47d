"""TOML run configuration: a scenario plus loop, falsifier and refiner settings.

Grammar (every table but ``[scenario]`` is optional)::

    [scenario]
    name = "corridor-8x8"
    grid_width = 8
    grid_height = 8
    start = [0, 3]
    goal = [7, 3]            # omit for a goal-free world
    horizon = 30
    slip_base = 0.05
    step_cost = -0.01
    goal_reward = 1.0
    slip = "extra_slip"      # optional: name of a config coordinate added to slip_base
    nominal = [4.0, 3.25]    # optional: defaults to the box center

    [[scenario.config]]      # coordinates of e, in order
    name = "hazard_x"
    bounds = [2.5, 5.5]

    [[scenario.hazards]]     # numbers are fixed, strings name a config coordinate
    center_x = "hazard_x"
    center_y = "hazard_y"
    radius = 0.6

    [safety]
    goal_deadline = 20       # optional reach deadline in steps

    [loop]                   # LoopConfig fields
    [falsifier]              # FalsifierConfig fields
    [refiner]                # RefinerConfig fields; step_cap may be "inf"
"""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .env import Coord, HazardTemplate, Scenario
from .errors import ConfigError
from .falsifier import FalsifierConfig
from .loop import LoopConfig
from .refiner import RefinerConfig
from .robustness import SafetySpec

SCENARIO_DIR = Path(__file__).parent / "scenarios"

_SCENARIO_KEYS = {
    "name", "description", "grid_width", "grid_height", "start", "goal", "horizon", "slip_base",
    "step_cost", "goal_reward", "slip", "nominal", "config", "hazards",
}
_REQUIRED = ("name", "grid_width", "grid_height", "start", "horizon", "config")


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: Scenario
    spec: SafetySpec
    loop: LoopConfig
    source: str = ""

    @property
    def lam(self) -> float:
        return self.loop.refiner.lam


def bundled_scenario(name: str) -> Path:
    path = SCENARIO_DIR / f"{name}.toml"
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return path


def _number(table: dict, key: str, where: str, kind=float, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}.{key}", "missing required key")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {v!r}")
    if kind is int:
        if not isinstance(v, int):
            raise ConfigError(f"{where}.{key}", f"expected an integer, got {v!r}")
        return v
    return float(v)


def _cell(value, where: str) -> tuple[int, int]:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(c, int) and not isinstance(c, bool) for c in value)):
        raise ConfigError(where, f"expected [x, y] integers, got {value!r}")
    return int(value[0]), int(value[1])


def _scenario(table: dict) -> Scenario:
    if not isinstance(table, dict):
        raise ConfigError("scenario", "missing [scenario] table")
    for key in table:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"scenario.{key}", "unknown key")
    for key in _REQUIRED:
        if key not in table:
            raise ConfigError(f"scenario.{key}", "missing required key")
    coords = table["config"]
    if not isinstance(coords, list) or not coords:
        raise ConfigError("scenario.config", "expected at least one [[scenario.config]] entry")
    names, bounds = [], []
    for j, c in enumerate(coords):
        where = f"scenario.config[{j}]"
        if not isinstance(c, dict) or set(c) - {"name", "bounds"}:
            raise ConfigError(where, "entries take only 'name' and 'bounds'")
        name = c.get("name")
        if not isinstance(name, str) or name in names:
            raise ConfigError(f"{where}.name", f"expected a unique string, got {name!r}")
        b = c.get("bounds")
        if not (isinstance(b, list) and len(b) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in b)):
            raise ConfigError(f"{where}.bounds", f"expected [lo, hi], got {b!r}")
        if not b[0] < b[1]:
            raise ConfigError(f"{where}.bounds", "lo must be below hi")
        names.append(name)
        bounds.append((float(b[0]), float(b[1])))

    def param(value, where):
        if isinstance(value, str):
            if value not in names:
                raise ConfigError(where, f"unknown config coordinate {value!r}")
            return Coord(names.index(value))
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number or coordinate name, got {value!r}")
        return float(value)

    hazards = []
    for i, h in enumerate(table.get("hazards", [])):
        where = f"scenario.hazards[{i}]"
        if not isinstance(h, dict):
            raise ConfigError(where, "expected a table")
        for key in h:
            if key not in ("center_x", "center_y", "radius"):
                raise ConfigError(f"{where}.{key}", "unknown key")
        for key in ("center_x", "center_y", "radius"):
            if key not in h:
                raise ConfigError(f"{where}.{key}", "missing required key")
        hazards.append(HazardTemplate(*(param(h[k], f"{where}.{k}") for k in ("center_x", "center_y", "radius"))))
    slip = table.get("slip")
    slip_coord = None
    if slip is not None:
        coord = param(slip, "scenario.slip")
        if not isinstance(coord, Coord):
            raise ConfigError("scenario.slip", "must name a config coordinate")
        slip_coord = coord.index
    nominal = table.get("nominal")
    if nominal is not None:
        if not (isinstance(nominal, list) and all(isinstance(v, (int, float)) for v in nominal)):
            raise ConfigError("scenario.nominal", "expected a list of numbers")
        nominal = tuple(float(v) for v in nominal)
    goal = table.get("goal")
    try:
        return Scenario(
            name=str(table["name"]),
            grid_width=_number(table, "grid_width", "scenario", int),
            grid_height=_number(table, "grid_height", "scenario", int),
            start_state=_cell(table["start"], "scenario.start"),
            goal_state=None if goal is None else _cell(goal, "scenario.goal"),
            config_bounds=tuple(bounds),
            horizon=_number(table, "horizon", "scenario", int),
            slip_base=_number(table, "slip_base", "scenario", default=0.0),
            hazards=tuple(hazards),
            slip_coord=slip_coord,
            step_cost=_number(table, "step_cost", "scenario", default=-0.01),
            goal_reward=_number(table, "goal_reward", "scenario", default=1.0),
            nominal=nominal,
            description=str(table.get("description", "")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from None


def _fields(cls, table, where: str, base=None, **extra):
    if table is None:
        table = {}
    if not isinstance(table, dict):
        raise ConfigError(where, "expected a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known or key in extra:
            raise ConfigError(f"{where}.{key}", "unknown key")
        default = known[key].default
        if value == "inf" and isinstance(default, float):
            value = math.inf
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"{where}.{key}", f"expected true/false, got {value!r}")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{key}", f"expected a number, got {value!r}")
            if isinstance(default, int) and not isinstance(value, int):
                raise ConfigError(f"{where}.{key}", f"expected an integer, got {value!r}")
            value = type(default)(value)
        if isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{where}.{key}", f"expected a string, got {value!r}")
        kwargs[key] = value
    kwargs.update(extra)
    try:
        return dataclasses.replace(base, **kwargs) if base is not None else cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse TOML text; every failure is a :class:`ConfigError` naming the field."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("syntax", f"{source}: {exc}") from None
    for key in data:
        if key not in ("scenario", "safety", "loop", "falsifier", "refiner"):
            raise ConfigError(key, "unknown table")
    scenario = _scenario(data.get("scenario"))
    safety = data.get("safety", {})
    if not isinstance(safety, dict) or set(safety) - {"goal_deadline"}:
        raise ConfigError("safety", "only 'goal_deadline' is recognized")
    deadline = safety.get("goal_deadline")
    if deadline is not None and (isinstance(deadline, bool) or not isinstance(deadline, int)):
        raise ConfigError("safety.goal_deadline", f"expected an integer, got {deadline!r}")
    try:
        spec = SafetySpec.for_scenario(scenario, deadline)
    except ValueError as exc:
        raise ConfigError("safety.goal_deadline", str(exc)) from None
    falsifier = _fields(FalsifierConfig, data.get("falsifier"), "falsifier", base=LoopConfig().falsifier)
    refiner = _fields(RefinerConfig, data.get("refiner"), "refiner")
    loop = _fields(LoopConfig, data.get("loop"), "loop", falsifier=falsifier, refiner=refiner)
    return RunConfig(scenario, spec, loop, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def load_scenario(name_or_path) -> RunConfig:
    """Load a bundled scenario by name or any TOML file by path."""
    p = Path(name_or_path)
    if not p.suffix and not p.exists():
        p = bundled_scenario(str(name_or_path))
    return load_config(p)
