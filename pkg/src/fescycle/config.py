"""Run configuration: strict schema, JSON/TOML loading and dotted overrides.

The schema is the nested dictionary returned by :func:`default_config`.  A
user file may set any subset of it; a key that is not in the schema, or a
value of the wrong type, raises :class:`ConfigError`.  Value ranges are left
to the model dataclasses, which raise their own errors when built.
"""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .bounds import BoundsBudget
from .controller import Gains, TrajectorySpec
from .dynamics import BodyParams, DisturbanceSpec, PassiveParams
from .errors import ConfigError
from .geometry import RiderGeometry
from .model import CycleRider
from .muscles import MuscleId, MuscleModel, default_muscles
from .simulation import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# keys whose value may be a number or one of the listed literals
_NUMBER_OR = {
    ("controller", "nu0"): ("auto",),
    ("simulation", "q0"): (None,),
    ("simulation", "qdot0"): (None,),
}


def default_config() -> dict:
    """The full schema with default values."""
    sim = SimConfig()
    return {
        "geometry": asdict(RiderGeometry()),
        "body": asdict(BodyParams()),
        "passive": asdict(PassiveParams()),
        "muscles": {k.value: _muscle_dict(m) for k, m in default_muscles().items()},
        "disturbance": asdict(DisturbanceSpec()),
        "model": {"sense": 1, "force_floor": 1e-9, "reach_margin": 1e-3},
        "trajectory": asdict(TrajectorySpec()),
        "controller": {
            **asdict(Gains()),
            "u_max": sim.u_max,
            "nu0": sim.nu0,
            "boundary_layer": sim.boundary_layer,
            "quadrature": sim.quadrature,
            "timing": sim.control,
        },
        "simulation": {
            "dt": sim.dt,
            "duration": sim.duration,
            "integrator": sim.integrator,
            "e1_0": sim.e1_0,
            "q0": None,
            "qdot0": None,
            "settle_time": 20.0,
        },
        "bounds": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(BoundsBudget()).items()},
        "pattern": {"n": 360, "cadence_rpm": 0.0},
    }


def _muscle_dict(m: MuscleModel) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(m).items()}


def _check_value(path: tuple, value: Any, default: Any) -> Any:
    key = ".".join(path)
    literals = _NUMBER_OR.get(path)
    if literals is not None:
        if value in literals or (_is_number(value)):
            return float(value) if _is_number(value) else value
        raise ConfigError(f"{key}: expected a number or one of {list(literals)}, got {value!r}")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)) or not all(_is_number(v) for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    raise ConfigError(f"{key}: unsupported value {value!r}")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def merge(base: dict, update: Mapping, path: tuple = ()) -> dict:
    """Return ``base`` updated by ``update``; unknown keys are an error."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        here = path + (key,)
        if key not in out:
            raise ConfigError(f"unknown config key {'.'.join(here)!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{'.'.join(here)}: expected a table, got {value!r}")
            out[key] = merge(out[key], value, here)
        else:
            out[key] = _check_value(here, value, out[key])
    return out


def parse_override(text: str) -> tuple[list, Any]:
    """``"a.b.c=VAL"`` -> ``(["a", "b", "c"], value)``; VAL is JSON if it parses, else a string."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form KEY=VALUE")
    raw = raw.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(cfg: dict, overrides: Sequence[str]) -> dict:
    for text in overrides:
        keys, value = parse_override(text)
        nested: Any = value
        for k in reversed(keys):
            nested = {k: nested}
        cfg = merge(cfg, nested)
    return cfg


def load_file(path) -> dict:
    """Parse a ``.json`` or ``.toml`` file into a plain dictionary."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".json", ".toml"):
        raise ConfigError(f"{path}: config must be .json or .toml")
    try:
        if suffix == ".json":
            with open(path) as fh:
                data = json.load(fh)
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return data


def load_config(path=None, overrides: Sequence[str] = (), seed: Optional[int] = None) -> dict:
    """Defaults, then the file at ``path`` (if any), then overrides, then ``seed``."""
    cfg = default_config()
    if path is not None:
        cfg = merge(cfg, load_file(path))
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg = merge(cfg, {"bounds": {"seed": int(seed)}})
    return cfg


@dataclass(frozen=True)
class RunSetup:
    """Objects built from a validated config dictionary."""

    model: CycleRider
    sim: SimConfig
    budget: BoundsBudget
    settle_time: float
    pattern_n: int
    pattern_cadence_rpm: float
    raw: dict


def build(cfg: Mapping) -> RunSetup:
    """Instantiate model, simulation and bound-estimation settings.

    Value errors from the dataclasses (``ModelError``, ``DomainError``,
    ``ConfigError``) propagate unchanged.
    """
    c = cfg["controller"]
    muscles = {MuscleId(k): MuscleModel(**v) for k, v in cfg["muscles"].items()}
    model = CycleRider(
        geometry=RiderGeometry(**cfg["geometry"]),
        body=BodyParams(**cfg["body"]),
        passive=PassiveParams(**cfg["passive"]),
        muscles=muscles,
        disturbance=DisturbanceSpec(**cfg["disturbance"]),
        **cfg["model"],
    )
    s = cfg["simulation"]
    try:
        sim = SimConfig(
            dt=s["dt"],
            duration=s["duration"],
            integrator=s["integrator"],
            control=c["timing"],
            quadrature=c["quadrature"],
            q0=s["q0"],
            qdot0=s["qdot0"],
            e1_0=s["e1_0"],
            nu0=c["nu0"],
            u_max=c["u_max"],
            boundary_layer=c["boundary_layer"],
            gains=Gains(c["alpha1"], c["alpha2"], c["ks"], c["beta"]),
            trajectory=TrajectorySpec(**cfg["trajectory"]),
        )
        b = dict(cfg["bounds"])
        b["rho_radii"] = tuple(b["rho_radii"])
        budget = BoundsBudget(**b)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    p = cfg["pattern"]
    if p["n"] < 1:
        raise ConfigError("pattern.n must be positive")
    return RunSetup(model, sim, budget, float(s["settle_time"]), int(p["n"]), float(p["cadence_rpm"]), dict(cfg))


