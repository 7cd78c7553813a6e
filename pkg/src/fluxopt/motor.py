"""Machine parameters, reduced rotor-flux/speed model and copper-loss formulas.

All quantities are SI. Currents, voltages and fluxes follow the
power-invariant Park-Clarke scaling, so ``P = Rs * (i_sd**2 + i_sq**2)`` holds
without 3/2 factors.

Direct-axis copper loss is ``i_sd**2 * Rs``. (Some printed forms of the
loss functional show ``i_sd**2 * RR`` there, which is inconsistent with the
optimal ratio ``gamma``; the stator resistance is the correct one.)
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError

PRESET_NAMES = ("DRS71S4", "DRS112M4", "DRS160M4")
PRESET_ENV = "FLUXOPT_PRESET_DIR"

# smallest flux used when evaluating i_sq = T / (p * phi_r)
FLUX_FLOOR = 1e-6


@dataclass(frozen=True)
class MotorParams:
    Rs: float  # stator resistance, Ohm
    RR: float  # rotor resistance (Gamma-inverse), Ohm
    LM: float  # unsaturated main inductance, H
    J_inertia: float  # kg m^2
    p: int  # pole pairs
    i_sd_nom: float  # nominal magnetizing current, A
    T_rated: float  # N m
    name: str = "custom"

    def __post_init__(self):
        for key in ("Rs", "RR", "LM", "J_inertia", "i_sd_nom", "T_rated"):
            val = getattr(self, key)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"MotorParams.{key} must be a positive finite number, got {val!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"MotorParams.p must be an integer >= 1, got {self.p!r}")

    @property
    def tau_R(self) -> float:
        """Rotor time constant LM / RR."""
        return self.LM / self.RR

    @classmethod
    def from_dict(cls, data: dict) -> "MotorParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names - {"description"}
        if unknown:
            raise ConfigError(f"unknown motor fields: {sorted(unknown)}")
        missing = names - set(data) - {"name"}
        if missing:
            raise ConfigError(f"missing motor fields: {sorted(missing)}")
        kwargs = {k: data[k] for k in names if k in data}
        try:
            kwargs["p"] = int(kwargs["p"])
            for k in ("Rs", "RR", "LM", "J_inertia", "i_sd_nom", "T_rated"):
                kwargs[k] = float(kwargs[k])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad motor field value: {exc}") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _preset_dirs():
    extra = os.environ.get(PRESET_ENV)
    if extra:
        for part in extra.split(os.pathsep):
            if part:
                yield Path(part)


def load_motor(name_or_path: str) -> MotorParams:
    """Load a motor from a JSON file path or by preset name.

    Preset names are looked up in ``$FLUXOPT_PRESET_DIR`` first, then in the
    presets bundled with the package.
    """
    path = Path(name_or_path)
    if path.suffix == ".json" and path.is_file():
        return _read_motor_file(path)
    for directory in _preset_dirs():
        candidate = directory / f"{name_or_path}.json"
        if candidate.is_file():
            return _read_motor_file(candidate)
    bundled = resources.files("fluxopt") / "presets" / f"{name_or_path}.json"
    if bundled.is_file():
        return MotorParams.from_dict(json.loads(bundled.read_text()))
    raise ConfigError(f"unknown motor preset or file: {name_or_path!r}")


def _read_motor_file(path: Path) -> MotorParams:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return MotorParams.from_dict(data)


def presets() -> list[MotorParams]:
    return [load_motor(name) for name in PRESET_NAMES]


def _check_finite(**values):
    for key, val in values.items():
        if not math.isfinite(val):
            raise ValueError(f"{key} must be finite, got {val!r}")


def flux_derivative(params: MotorParams, phi_r: float, i_sd: float) -> float:
    """d(phi_r)/dt = -phi_r / tau_R + RR * i_sd."""
    _check_finite(phi_r=phi_r, i_sd=i_sd)
    return -(params.RR / params.LM) * phi_r + params.RR * i_sd


def speed_derivative(params: MotorParams, phi_r: float, i_sq: float, T_m: float) -> float:
    """Electrical shaft acceleration p * (p * phi_r * i_sq - T_m) / J."""
    return params.p * (params.p * phi_r * i_sq - T_m) / params.J_inertia


def electromagnetic_torque(params: MotorParams, phi_r: float, i_sq: float) -> float:
    return params.p * phi_r * i_sq


class CurrentsDQ(NamedTuple):
    i_sd: float
    i_sq: float


class LossSample(NamedTuple):
    p_loss: float
    delta_p: float
    p_dyn: float


def _inductance(params, sat, i_sd):
    if sat is None:
        return params.LM
    return sat.inductance(i_sd)


def loss_sample(params: MotorParams, sat, currents: CurrentsDQ, phi_r: float) -> LossSample:
    """Controllable copper loss, transient rotor d-axis loss and their sum.

    ``sat`` is a saturation curve (anything with ``inductance(i)``) or None
    for the constant main inductance ``LM``.
    """
    i_sd, i_sq = currents
    p_loss = i_sq * i_sq * (params.Rs + params.RR) + i_sd * i_sd * params.Rs
    i_rd = i_sd - phi_r / _inductance(params, sat, i_sd)
    delta_p = params.RR * i_rd * i_rd
    return LossSample(p_loss, delta_p, p_loss + delta_p)


def loss_arrays(params: MotorParams, sat, i_sd, i_sq, phi_r):
    """Vectorised :func:`loss_sample`; returns ``(p_loss, delta_p, p_dyn)`` arrays."""
    i_sd = np.asarray(i_sd, dtype=float)
    i_sq = np.asarray(i_sq, dtype=float)
    phi_r = np.asarray(phi_r, dtype=float)
    p_loss = i_sq**2 * (params.Rs + params.RR) + i_sd**2 * params.Rs
    if sat is None:
        L = params.LM
    else:
        L = np.array([sat.inductance(float(i)) for i in np.ravel(i_sd)]).reshape(i_sd.shape)
    delta_p = params.RR * (i_sd - phi_r / L) ** 2
    return p_loss, delta_p, p_loss + delta_p
