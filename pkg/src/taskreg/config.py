"""Scenario file parsing and validation.

Scenario files are YAML with fixed sections (model, disturbances, controller,
internal_model, initial, target, sim); units are SI throughout and angles are
radians. Validation errors name the offending key.
"""

from __future__ import annotations

import importlib.resources
import os
from pathlib import Path

import yaml

from .controllers import Gains
from .dynamics import ManipulatorParams
from .exosystem import FORCE, TORQUE, SinusoidSpec, exo_from_sinusoids
from .internal_model import build_internal_model
from .simulation import CONTROLLER_KINDS, Scenario

CONTROLLER_ALIASES = {
    "full": "full-state",
    "vf": "velocity-free",
    "sat": "saturated",
    "p1": "passive-p1",
    "p2": "passive-p2",
}


class ConfigError(ValueError):
    """Invalid or unreadable scenario configuration."""


def bundled_scenario_path() -> Path:
    """Path of the scenario file shipped with the package."""
    res = importlib.resources.files("taskreg").joinpath("scenarios/default.yaml")
    return Path(os.fspath(res))


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Load and validate a scenario file, applying CLI-style overrides.

    Supported overrides: controller (accepts the aliases full/vf/sat/p1/p2),
    dt and t_end.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"{path}: YAML syntax error{loc}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return scenario_from_dict(raw, overrides)


def scenario_from_dict(raw: dict, overrides: dict | None = None) -> Scenario:
    """Build a Scenario from the parsed configuration mapping."""
    overrides = dict(overrides or {})

    model_sec = _section(raw, "model")
    model = _build(ManipulatorParams,
                   l1=_number(model_sec, "model.l1", positive=True),
                   l2=_number(model_sec, "model.l2", positive=True),
                   m1=_number(model_sec, "model.m1", positive=True),
                   m2=_number(model_sec, "model.m2", positive=True),
                   g0=_number(model_sec, "model.g0", nonnegative=True))

    dist = raw.get("disturbances")
    if dist is None:
        raise ConfigError("missing required section 'disturbances'")
    if not isinstance(dist, list):
        raise ConfigError("disturbances: must be a list")
    specs = []
    for i, item in enumerate(dist):
        key = f"disturbances[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{key}: must be a mapping")
        kind = item.get("kind")
        if kind not in (TORQUE, FORCE):
            raise ConfigError(f"{key}.kind: must be '{TORQUE}' or '{FORCE}'")
        specs.append(_build(
            SinusoidSpec,
            frequency=_number(item, f"{key}.freq", field="freq", nonnegative=True),
            amplitude=_number(item, f"{key}.amp", field="amp"),
            phase=_number(item, f"{key}.phase", field="phase"),
            channel=_integer(item, f"{key}.channel", field="channel"),
            kind=kind))
    if not specs:
        # Zero-amplitude oscillator: d(t) is identically zero but the loop
        # state keeps a well-formed exosystem block.
        specs = [SinusoidSpec(frequency=1.0, amplitude=0.0)]
    try:
        exo = exo_from_sinusoids(specs, model.n_joints)
    except ValueError as exc:
        raise ConfigError(f"disturbances: {exc}") from exc

    ctl_sec = _section(raw, "controller")
    kind = ctl_sec.get("kind")
    kind = overrides.pop("controller", None) or kind
    kind = CONTROLLER_ALIASES.get(kind, kind)
    if kind not in CONTROLLER_KINDS:
        raise ConfigError(
            f"controller.kind: expected one of {', '.join(CONTROLLER_KINDS)} "
            f"(or aliases {', '.join(CONTROLLER_ALIASES)})")
    gains = _build(Gains,
                   kp=_number(ctl_sec, "controller.kp", positive=True),
                   kd=_number(ctl_sec, "controller.kd", positive=True),
                   h=_number(ctl_sec, "controller.h", positive=True))

    im_sec = _section(raw, "internal_model")
    im1 = _side_model(im_sec, "torque", model.n_joints)
    im2 = _side_model(im_sec, "force", model.n_joints)

    init_sec = _section(raw, "initial")
    q0 = _vector(init_sec, "initial.q0", "q0", model.n_joints)
    xi0 = _vector(init_sec, "initial.xi0", "xi0", model.n_joints)

    target_sec = _section(raw, "target")
    xd = _vector(target_sec, "target.xd", "xd", 2)

    sim_sec = _section(raw, "sim")
    dt = overrides.pop("dt", None)
    t_end = overrides.pop("t_end", None)
    if overrides:
        raise ConfigError(f"unknown overrides: {sorted(overrides)}")
    if dt is None:
        dt = _number(sim_sec, "sim.dt", positive=True)
    if t_end is None:
        t_end = _number(sim_sec, "sim.t_end", positive=True)
    settle_tol = (_number(sim_sec, "sim.settle_tol", positive=True)
                  if "settle_tol" in sim_sec else 1e-3)

    try:
        return Scenario(model=model, exo=exo, im1=im1, im2=im2, gains=gains,
                        controller=kind, x_d=xd, q0=q0, xi0=xi0,
                        t_end=float(t_end), dt=float(dt), settle_tol=settle_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _side_model(sec: dict, side: str, n_joints: int):
    sub = sec.get(side)
    if not isinstance(sub, dict):
        raise ConfigError(f"internal_model.{side}: must be a mapping with "
                          "'frequencies' (and optional 'channels')")
    freqs = sub.get("frequencies")
    if not isinstance(freqs, list) or not freqs:
        raise ConfigError(f"internal_model.{side}.frequencies: must be a "
                          "non-empty list of positive numbers")
    channels = sub.get("channels")
    try:
        return build_internal_model(freqs, n_joints, channels, target_kind=side)
    except ValueError as exc:
        raise ConfigError(f"internal_model.{side}: {exc}") from exc


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"missing required section '{name}'")
    return sec


def _build(cls, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _number(sec: dict, key: str, field: str | None = None, positive=False,
            nonnegative=False) -> float:
    name = field if field is not None else key.rsplit(".", 1)[-1]
    if name not in sec:
        raise ConfigError(f"{key}: missing required key")
    val = sec[name]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key}: must be a number, got {val!r}")
    val = float(val)
    if positive and val <= 0:
        raise ConfigError(f"{key}: must be > 0, got {val}")
    if nonnegative and val < 0:
        raise ConfigError(f"{key}: must be >= 0, got {val}")
    return val


def _integer(sec: dict, key: str, field: str) -> int:
    if field not in sec:
        raise ConfigError(f"{key}: missing required key")
    val = sec[field]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key}: must be an integer, got {val!r}")
    return val


def _vector(sec: dict, key: str, field: str, length: int):
    val = sec.get(field)
    if (not isinstance(val, list) or len(val) != length
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in val)):
        raise ConfigError(f"{key}: must be a list of {length} numbers")
    return [float(v) for v in val]
