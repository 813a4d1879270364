"""Scenario configuration: parsing, schema validation, defaults.

Configs are TOML (preferred, comment-friendly) or JSON. Every scenario has
a schema of known parameters with defaults; unknown keys anywhere in the
config are rejected with an error that lists every violation at once.
"""

from __future__ import annotations

import json

try:
    import tomllib
except ImportError:                                    # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

from .errors import ParseError, SchemaError

# parameters that must be strictly positive wherever they appear
_POSITIVE_KEYS = {
    "T", "tau", "h", "gamma_w", "sigma", "epsilon", "mobility", "r0",
    "gamma_b", "gamma_A", "beta", "delta", "radius", "length", "r_major",
    "r_minor", "half_length", "freeze_until", "gamma", "inhibitor_diffusion",
    "max_area_drift", "fp_tol",
}
_NONNEG_INT_KEYS = {"seed", "subdivisions", "levels", "fp_max_iter"}
_CHOICE_KEYS = {
    "potential": ("F1", "F2"),
    "mode": ("explicit", "implicit"),
    "cip_variant": ("gradient", "streamline"),
}


@dataclass
class ScenarioSchema:
    description: str
    defaults: dict                      # parameter name -> default value
    solvers: tuple = ()                 # admissible solver numbers, if any
    geometry: bool = False              # accepts a [geometry] table


SCENARIOS: dict[str, ScenarioSchema] = {
    "adr_rotating_hemisphere": ScenarioSchema(
        "manufactured advection-diffusion-reaction test on a rotating "
        "hemisphere (exact solution known)",
        {"h": 0.1, "tau": 0.01, "T": 1.0, "solver": 4,
         "gamma_b": 0.01, "gamma_A": 10.0, "cip_variant": "gradient"},
        solvers=(1, 2, 3, 4)),
    "adr_ill_posed": ScenarioSchema(
        "boundary-layer transport test exercising bound/mass preservation",
        {"tau": 0.01, "T": 1.0, "solver": 4},
        solvers=(1, 2, 3, 4), geometry=True),
    "ch_cylinder": ScenarioSchema(
        "Cahn-Hilliard phase separation on a stretching cylinder",
        {"potential": "F2", "solver": 4, "h": 0.05, "T": 4.0, "tau": 2e-3,
         "mobility": 0.01, "epsilon": 0.1, "sigma": 10.0, "seed": 0},
        solvers=(1, 2, 3, 4)),
    "willmore_sphere": ScenarioSchema(
        "spontaneous-curvature driven sphere evolution vs the radius ODE",
        {"subdivisions": 3, "tau": 5e-4, "T": 0.1, "kappa0": -1.0,
         "r0": 1.0, "solver": 2, "gamma_w": 1.0},
        solvers=(1, 2)),
    "willmore_torus": ScenarioSchema(
        "Willmore flow of a 2:1 torus toward the Clifford energy",
        {"h": 0.1, "tau": 1e-3, "T": 2.0, "solver": 2, "gamma_w": 1.0},
        solvers=(1, 2)),
    "willmore_cigar": ScenarioSchema(
        "collapsing cigar surfaces probing breakdown detection",
        {"variant": 1, "h": 0.25, "tau": 1e-3, "solver": 2},
        solvers=(1, 2)),
    "coupled_sphere": ScenarioSchema(
        "manufactured coupled field-plus-growth run on a logistic sphere",
        {"h": 0.2, "tau": 0.05, "T": 1.0, "mode": "implicit"}),
    "tumor_growth": ScenarioSchema(
        "reaction-diffusion patterning driving surface growth",
        {"solver": 2, "T": 8.0, "tau": 1e-3, "h": 0.07,
         "freeze_until": 5.0, "seed": 0},
        solvers=(1, 2)),
    "two_phase_membrane": ScenarioSchema(
        "two-phase vesicle: Cahn-Hilliard coupled to inextensible bending",
        {"gamma_w": 0.5, "tau": 1e-4, "T": 1.0, "h": 0.08,
         "epsilon": 0.1, "mobility": 1e-3}),
}

_TOP_LEVEL_KEYS = {"scenario", "output_dir", "seed", "params", "geometry"}


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    geometry: dict | None = None
    output_dir: str = "runs"
    seed: int = 0

    def schema(self) -> ScenarioSchema:
        return SCENARIOS[self.scenario]


def _parse_raw(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON at line {exc.lineno}, column "
                             f"{exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ParseError("top-level JSON value must be an object")
        return data
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"invalid TOML: {exc}") from None


def _check_value(key: str, value, default, schema: ScenarioSchema,
                 violations: list, path: str):
    where = f"{path}{key}"
    if isinstance(default, bool) or isinstance(value, bool):
        if not isinstance(default, bool) or not isinstance(value, bool):
            violations.append(f"{where}: expected "
                              f"{type(default).__name__}, got "
                              f"{type(value).__name__}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            violations.append(f"{where}: expected string, got "
                              f"{type(value).__name__}")
            return value
        choices = _CHOICE_KEYS.get(key)
        if choices and value not in choices:
            violations.append(f"{where}: must be one of {choices}")
        return value
    if not isinstance(value, (int, float)):
        violations.append(f"{where}: expected number, got "
                          f"{type(value).__name__}")
        return value
    if key == "solver" or key == "variant":
        allowed = schema.solvers if key == "solver" else (1, 2)
        if not (isinstance(value, int) and value in allowed):
            violations.append(f"{where}: must be an integer in {allowed}")
        return value
    if key in _NONNEG_INT_KEYS:
        if not (isinstance(value, int) and value >= 0):
            violations.append(f"{where}: must be a nonnegative integer")
        return value
    if isinstance(default, int) and not isinstance(value, int):
        violations.append(f"{where}: expected integer, got float")
        return value
    if key in _POSITIVE_KEYS and not value > 0:
        violations.append(f"{where}: must be positive")
    return float(value) if isinstance(default, float) else value


def validate_config(data: dict) -> ScenarioConfig:
    """Validate a raw mapping against the scenario schemas.

    Collects every violation before raising, so a bad config reports all
    its problems at once.
    """
    violations: list[str] = []
    for key in data:
        if key not in _TOP_LEVEL_KEYS:
            violations.append(f"unknown key '{key}'")
    name = data.get("scenario")
    if not isinstance(name, str) or name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        violations.append(f"scenario: must be one of {known}")
        raise SchemaError("; ".join(violations), violations)
    schema = SCENARIOS[name]

    params = dict(schema.defaults)
    raw_params = data.get("params", {})
    if not isinstance(raw_params, dict):
        violations.append("params: must be a table")
        raw_params = {}
    for key, value in raw_params.items():
        if key not in schema.defaults:
            violations.append(f"params.{key}: unknown key for scenario "
                              f"'{name}'")
            continue
        params[key] = _check_value(key, value, schema.defaults[key],
                                   schema, violations, "params.")

    geometry = data.get("geometry")
    if geometry is not None:
        if not schema.geometry:
            violations.append(f"geometry: scenario '{name}' does not accept "
                              "a geometry table")
        elif not isinstance(geometry, dict):
            violations.append("geometry: must be a table")
        elif "kind" not in geometry or not isinstance(geometry["kind"], str):
            violations.append("geometry.kind: required string")

    output_dir = data.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        violations.append("output_dir: must be a string")
        output_dir = "runs"
    seed = data.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool)
            and seed >= 0):
        violations.append("seed: must be a nonnegative integer")
        seed = 0
    if "seed" in params and "seed" in data:
        params["seed"] = seed

    if violations:
        raise SchemaError("; ".join(violations), violations)
    return ScenarioConfig(name, params, geometry, output_dir, seed)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a TOML or JSON scenario config."""
    return validate_config(_parse_raw(text))


def apply_overrides(config: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply ``key=value`` strings on top of a validated config."""
    data = {"scenario": config.scenario, "output_dir": config.output_dir,
            "seed": config.seed, "params": dict(config.params)}
    if config.geometry is not None:
        data["geometry"] = dict(config.geometry)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise SchemaError(f"override '{item}' is not of the form "
                              "key=value", [item])
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if key in ("output_dir", "seed", "scenario"):
            data[key] = value
        elif key.startswith("geometry."):
            data.setdefault("geometry", {})[key.split(".", 1)[1]] = value
        else:
            data["params"][key.removeprefix("params.")] = value
    return validate_config(data)
