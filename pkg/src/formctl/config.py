"""Scenario configuration: JSON documents, validation and built-in presets.

A scenario document looks like::

    {
      "version": 1,
      "name": "paper_3x3",
      "partition": [3, 3, 3],
      "robots": [{"mass": 1.0, ...}],          # one entry per robot, or one shared entry
      "initial_conditions": {"kind": "basis_plus_offset", "offset": [-10, 0],
                             "jitter_radius": 2.0, "seed": 0, "heading": 0.0},
      "formation": {"a": 20, "b": 7},         # or {"basis": [[x, y], ...]}
      "trajectory": {"kind": "sine_track", "params": {...}},
      "gains": {...}, "potential": {...}, "integrator": {...},
      "convergence": {"tol": 0.05, "hold": 0.5},
      "outputs": {"dir": "out", "figures": true}
    }

Unknown keys, duplicate keys and out-of-range values are rejected with the
JSON path of the offending field.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from formctl.cbt import GroupPartition
from formctl.collision import PotentialParams
from formctl.dynamics import RobotParams
from formctl.errors import ConfigError
from formctl.smc import ControllerGains, SineTrack

SCHEMA_VERSION = 1
INTEGRATORS = ("rk4", "semi_implicit_euler")

_NUM = {"type": "number"}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}


def _obj(props: dict[str, Any], required: tuple[str, ...] = ()) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": props,
        "required": list(required),
        "additionalProperties": False,
    }


_STATE = _obj(
    {k: _NUM for k in ("x", "y", "vx", "vy", "theta", "theta_dot")}, required=("x", "y")
)

SCHEMA: dict[str, Any] = _obj(
    {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "partition": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "robots": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {
                    k: _NUM
                    for k in ("mass", "inertia", "wheel_separation", "wheel_radius", "com_offset")
                }
            ),
        },
        "initial_conditions": {
            "oneOf": [
                _obj(
                    {
                        "kind": {"const": "explicit"},
                        "states": {"type": "array", "items": _STATE},
                    },
                    required=("kind", "states"),
                ),
                _obj(
                    {
                        "kind": {"const": "basis_plus_offset"},
                        "offset": _PAIR,
                        "jitter_radius": _NUM,
                        "seed": {"type": "integer"},
                        "heading": _NUM,
                    },
                    required=("kind",),
                ),
                _obj(
                    {
                        "kind": {"const": "random"},
                        "radius": _NUM,
                        "center": _PAIR,
                        "seed": {"type": "integer"},
                    },
                    required=("kind",),
                ),
            ]
        },
        "formation": {
            "oneOf": [
                _obj({"a": _NUM, "b": _NUM}, required=("a", "b")),
                _obj({"basis": {"type": "array", "items": _PAIR}}, required=("basis",)),
            ]
        },
        "trajectory": _obj(
            {
                "kind": {"const": "sine_track"},
                "params": _obj(
                    {"speed": _NUM, "amplitude": _NUM, "omega": _NUM, "origin": _PAIR}
                ),
            },
            required=("kind",),
        ),
        "gains": _obj({f.name: _NUM for f in dataclasses.fields(ControllerGains)}),
        "potential": _obj(
            {
                "enabled": {"type": "boolean"},
                "enforce_gain_condition": {"type": "boolean"},
                "amplitude": _NUM,
                "length_scale": _NUM,
                "sensing_radius": _NUM,
                "approach_speed": _NUM,
                "bound": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                    ]
                },
            }
        ),
        "integrator": _obj(
            {
                "method": {"enum": list(INTEGRATORS)},
                "h": _NUM,
                "duration": _NUM,
                "record_every": {"type": "integer"},
            }
        ),
        "convergence": _obj({"tol": _NUM, "hold": _NUM}),
        "outputs": _obj({"dir": {"type": "string"}, "figures": {"type": "boolean"}}),
    },
    required=("version", "partition", "formation"),
)


@dataclass(frozen=True)
class InitialConditions:
    """How the starting fleet state is produced.

    ``explicit`` uses ``states`` (tuples of x, y, vx, vy, theta, theta_dot);
    ``basis_plus_offset`` places robots at the formation basis shifted by
    ``offset`` plus a uniform jitter in a disc of ``jitter_radius``;
    ``random`` draws positions uniformly in a disc of ``radius`` about
    ``center`` and headings uniformly in [-pi, pi).
    """

    kind: str = "basis_plus_offset"
    offset: tuple[float, float] = (-10.0, 0.0)
    jitter_radius: float = 2.0
    seed: int = 0
    heading: float = 0.0
    radius: float = 10.0
    center: tuple[float, float] = (0.0, 0.0)
    states: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "rk4"
    h: float = 1e-3
    duration: float = 20.0
    record_every: int = 1

    @property
    def steps(self) -> int:
        return int(math.floor(self.duration / self.h + 1e-9))


@dataclass(frozen=True)
class ScenarioConfig:
    partition: GroupPartition
    robots: tuple[RobotParams, ...]
    basis: tuple[tuple[float, float], ...]
    initial: InitialConditions = InitialConditions()
    trajectory: SineTrack = SineTrack()
    gains: ControllerGains = ControllerGains()
    potential: PotentialParams = PotentialParams()
    collision: bool = False
    enforce_gain_condition: bool = True
    integrator: IntegratorSettings = IntegratorSettings()
    tol_conv: float = 0.05
    hold: float = 0.5
    formation_sides: tuple[float, float] | None = None
    name: str = "scenario"
    out_dir: str = "out"
    figures: bool = True

    def __post_init__(self) -> None:
        n = self.partition.n
        if len(self.robots) != n:
            raise ConfigError(f"expected {n} robot parameter sets, got {len(self.robots)}", "robots")
        if len(self.basis) != n:
            raise ConfigError(
                f"formation basis has {len(self.basis)} points, partition needs {n}", "formation"
            )
        if not np.all(np.isfinite(np.asarray(self.basis, dtype=float))):
            raise ConfigError("formation basis must be finite", "formation.basis")
        integ = self.integrator
        if integ.method not in INTEGRATORS:
            raise ConfigError(f"unknown method {integ.method!r}", "integrator.method")
        if not (integ.h > 0 and math.isfinite(integ.h)):
            raise ConfigError(f"step must be positive, got {integ.h!r}", "integrator.h")
        if not (integ.duration > integ.h and math.isfinite(integ.duration)):
            raise ConfigError(
                f"duration must exceed the step {integ.h}, got {integ.duration!r}",
                "integrator.duration",
            )
        if integ.record_every < 1:
            raise ConfigError("must be >= 1", "integrator.record_every")
        if not self.tol_conv > 0:
            raise ConfigError(f"must be positive, got {self.tol_conv!r}", "convergence.tol")
        if not self.hold >= 0:
            raise ConfigError(f"must be >= 0, got {self.hold!r}", "convergence.hold")
        init = self.initial
        if init.kind not in ("explicit", "basis_plus_offset", "random"):
            raise ConfigError(f"unknown kind {init.kind!r}", "initial_conditions.kind")
        if init.kind == "explicit":
            if len(init.states) != n:
                raise ConfigError(
                    f"expected {n} states, got {len(init.states)}", "initial_conditions.states"
                )
            for i, (st, p) in enumerate(zip(init.states, self.robots)):
                _check_rolling(st, p, f"initial_conditions.states[{i}]")
        if init.jitter_radius < 0 or init.radius <= 0:
            raise ConfigError("radii must be positive", "initial_conditions")

    @property
    def n(self) -> int:
        return self.partition.n

    def basis_array(self) -> np.ndarray:
        return np.asarray(self.basis, dtype=float)

    def initial_state(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(positions, velocities, theta, theta_dot)`` at t = 0."""
        n = self.n
        init = self.initial
        if init.kind == "explicit":
            S = np.asarray(init.states, dtype=float)
            return S[:, 0:2].copy(), S[:, 2:4].copy(), S[:, 4].copy(), S[:, 5].copy()
        rng = np.random.default_rng(init.seed)
        if init.kind == "basis_plus_offset":
            pos = self.basis_array() + np.asarray(init.offset) + _disc(rng, n, init.jitter_radius)
            theta = np.full(n, float(init.heading))
        else:
            pos = np.asarray(init.center) + _disc(rng, n, init.radius)
            theta = rng.uniform(-np.pi, np.pi, n)
        return pos, np.zeros((n, 2)), theta, np.zeros(n)

    def replace(self, **changes: Any) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)


def _disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    rad = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))


def _check_rolling(state: tuple[float, ...], params: RobotParams, path: str) -> None:
    # the tracked point's lateral velocity must equal d * theta_dot
    _, _, vx, vy, theta, theta_dot = state
    lateral = -math.sin(theta) * vx + math.cos(theta) * vy
    if abs(lateral - params.com_offset * theta_dot) > 1e-9 * (1 + abs(lateral)):
        raise ConfigError(
            f"velocity violates the rolling constraint: lateral speed {lateral:.6g} != "
            f"d * theta_dot = {params.com_offset * theta_dot:.6g}",
            path,
        )


def paper_formation_basis(a: float = 20.0, b: float = 7.0) -> np.ndarray:
    """Nine-robot basis: three side-``b`` triangles on a side-``a`` triangle."""
    r3 = math.sqrt(3.0)
    low = -r3 * a / 6
    top = r3 * a / 3
    return np.array(
        [
            (a / 2 + b / 2, low - r3 * b / 6),
            (a / 2 - b / 2, low - r3 * b / 6),
            (a / 2, low + r3 * b / 3),
            (-a / 2 + b / 2, low - r3 * b / 6),
            (-a / 2 - b / 2, low - r3 * b / 6),
            (-a / 2, low + r3 * b / 3),
            (b / 2, top - r3 * b / 6),
            (-b / 2, top - r3 * b / 6),
            (0.0, top + r3 * b / 3),
        ]
    )


def _tuples(arr) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in np.asarray(arr, dtype=float))


def preset_paper_scenario() -> ScenarioConfig:
    """Nine robots in three groups tracking ``[t, 30 sin(0.1 t)]``."""
    return ScenarioConfig(
        name="paper_3x3",
        partition=GroupPartition((3, 3, 3)),
        robots=tuple(RobotParams() for _ in range(9)),
        basis=_tuples(paper_formation_basis(20.0, 7.0)),
        formation_sides=(20.0, 7.0),
        initial=InitialConditions(kind="basis_plus_offset", offset=(-10.0, 0.0), jitter_radius=2.0),
        trajectory=SineTrack(speed=1.0, amplitude=30.0, omega=0.1),
        gains=ControllerGains(s=1, r=1, c=1, delta_s=1, delta_r=1, delta_c=1, eps1=0.1, eps2=0.1),
    )


def preset_head_on() -> ScenarioConfig:
    """Two vertical robot pairs that swap sides along nearly shared lanes.

    The lanes of the two groups differ by 0.2 m in y, so without avoidance the
    robots pass within about 0.2 m of each other.
    """
    lane = 0.2
    basis = np.array([[3.0, -2.5], [3.0, 2.5], [-3.0, -2.5 + lane], [-3.0, 2.5 + lane]])
    basis -= basis.mean(axis=0)
    start = basis.copy()
    start[:, 0] = -start[:, 0]
    states = tuple((x, y, 0.0, 0.0, 0.0, 0.0) for x, y in start)
    return ScenarioConfig(
        name="head_on",
        partition=GroupPartition((2, 2)),
        robots=tuple(RobotParams() for _ in range(4)),
        basis=_tuples(basis),
        initial=InitialConditions(kind="explicit", states=states),
        trajectory=SineTrack(speed=0.0, amplitude=0.0, omega=0.0),
        gains=ControllerGains(r=0.5, delta_r=4.0),
        potential=PotentialParams(),
        collision=False,
    )


PRESETS = {"paper_3x3": preset_paper_scenario, "head_on": preset_head_on}


def preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset") from None


# -- serialisation -----------------------------------------------------------


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    init = cfg.initial
    if init.kind == "explicit":
        keys = ("x", "y", "vx", "vy", "theta", "theta_dot")
        init_doc: dict[str, Any] = {
            "kind": "explicit",
            "states": [dict(zip(keys, st)) for st in init.states],
        }
    elif init.kind == "basis_plus_offset":
        init_doc = {
            "kind": init.kind,
            "offset": list(init.offset),
            "jitter_radius": init.jitter_radius,
            "seed": init.seed,
            "heading": init.heading,
        }
    else:
        init_doc = {"kind": init.kind, "radius": init.radius, "center": list(init.center), "seed": init.seed}
    if cfg.formation_sides is not None:
        formation: dict[str, Any] = {"a": cfg.formation_sides[0], "b": cfg.formation_sides[1]}
    else:
        formation = {"basis": [list(p) for p in cfg.basis]}
    tr = cfg.trajectory
    pot = cfg.potential
    integ = cfg.integrator
    return {
        "version": SCHEMA_VERSION,
        "name": cfg.name,
        "partition": list(cfg.partition.group_sizes),
        "robots": [dataclasses.asdict(p) for p in cfg.robots],
        "initial_conditions": init_doc,
        "formation": formation,
        "trajectory": {
            "kind": "sine_track",
            "params": {"speed": tr.speed, "amplitude": tr.amplitude, "omega": tr.omega, "origin": list(tr.origin)},
        },
        "gains": dataclasses.asdict(cfg.gains),
        "potential": {
            "enabled": cfg.collision,
            "enforce_gain_condition": cfg.enforce_gain_condition,
            "amplitude": pot.amplitude,
            "length_scale": pot.length_scale,
            "sensing_radius": pot.sensing_radius,
            "approach_speed": pot.approach_speed,
            "bound": None if pot.bound is None else list(pot.bound),
        },
        "integrator": {
            "method": integ.method,
            "h": integ.h,
            "duration": integ.duration,
            "record_every": integ.record_every,
        },
        "convergence": {"tol": cfg.tol_conv, "hold": cfg.hold},
        "outputs": {"dir": cfg.out_dir, "figures": cfg.figures},
    }


def dumps_config(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _json_path(err: jsonschema.ValidationError) -> str:
    path = "$"
    for part in err.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def parse_config(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def config_from_dict(doc: dict[str, Any]) -> ScenarioConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(err.message, _json_path(err))

    partition = GroupPartition(tuple(doc["partition"]))
    n = partition.n

    robots_doc = doc.get("robots", [{}])
    if len(robots_doc) == 1:
        robots_doc = robots_doc * n
    if len(robots_doc) != n:
        raise ConfigError(f"expected 1 or {n} entries, got {len(robots_doc)}", "$.robots")
    robots = []
    for i, r in enumerate(robots_doc):
        try:
            robots.append(RobotParams(**r))
        except ConfigError as exc:
            raise ConfigError(str(exc), f"$.robots[{i}]") from exc

    form = doc["formation"]
    if "basis" in form:
        basis = _tuples(form["basis"])
        sides = None
    else:
        if tuple(partition.group_sizes) != (3, 3, 3):
            raise ConfigError("the (a, b) triangle basis needs partition [3, 3, 3]", "$.formation")
        if form["a"] <= 0 or form["b"] <= 0:
            raise ConfigError("triangle sides must be positive", "$.formation")
        sides = (float(form["a"]), float(form["b"]))
        basis = _tuples(paper_formation_basis(*sides))

    ic = dict(doc.get("initial_conditions", {"kind": "basis_plus_offset"}))
    if ic["kind"] == "explicit":
        keys = ("x", "y", "vx", "vy", "theta", "theta_dot")
        ic["states"] = tuple(tuple(float(s.get(k, 0.0)) for k in keys) for s in ic["states"])
    for key in ("offset", "center"):
        if key in ic:
            ic[key] = tuple(float(v) for v in ic[key])
    initial = InitialConditions(**ic)

    params = dict(doc.get("trajectory", {}).get("params", {}))
    if "origin" in params:
        params["origin"] = tuple(float(v) for v in params["origin"])
    trajectory = SineTrack(**params)

    gains = ControllerGains(**doc.get("gains", {}))

    pot = dict(doc.get("potential", {}))
    collision = pot.pop("enabled", False)
    enforce = pot.pop("enforce_gain_condition", True)
    if pot.get("bound") is not None:
        pot["bound"] = tuple(pot["bound"])
    potential = PotentialParams(**pot)

    conv = doc.get("convergence", {})
    outputs = doc.get("outputs", {})
    return ScenarioConfig(
        name=doc.get("name", "scenario"),
        partition=partition,
        robots=tuple(robots),
        basis=basis,
        formation_sides=sides,
        initial=initial,
        trajectory=trajectory,
        gains=gains,
        potential=potential,
        collision=collision,
        enforce_gain_condition=enforce,
        integrator=IntegratorSettings(**doc.get("integrator", {})),
        tol_conv=conv.get("tol", 0.05),
        hold=conv.get("hold", 0.5),
        out_dir=outputs.get("dir", "out"),
        figures=outputs.get("figures", True),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return parse_config(text)
