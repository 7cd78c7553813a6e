"""PI speed controller with a torque set-point output.

The controller output is divided by ``p * phi_r`` to give the i_sq
reference, so the closed speed loop is linear and does not see the flux:

    J * d(omega_r)/dt = PI[omega_ref - omega_r] - T_load

Gains follow the second-order parametrisation Ki = J w0^2,
Kp = 2 z sqrt(J Ki), with z > 1 (two real poles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DampingTooLow

MODES = ("ideal", "analytic", "closed_loop")


@dataclass(frozen=True)
class SpeedLoopConfig:
    mode: str = "ideal"
    w0: float = 20.0  # natural frequency, rad/s
    z: float = 10.0  # damping factor
    omega_ref: float = 100.0  # mechanical speed set-point, rad/s

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"speed loop mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.w0) and self.w0 > 0):
            raise ConfigError(f"w0 must be positive, got {self.w0!r}")
        if self.mode != "ideal" and not self.z > 1.0 + 1e-9:
            raise DampingTooLow(f"damping factor must exceed 1, got {self.z!r}")

    @classmethod
    def from_dict(cls, data) -> "SpeedLoopConfig":
        if data is None:
            return cls()
        unknown = set(data) - {"mode", "w0", "z", "omega_ref"}
        if unknown:
            raise ConfigError(f"unknown controller fields: {sorted(unknown)}")
        try:
            kwargs = {k: (float(v) if k != "mode" else v) for k, v in data.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad controller spec: {exc}") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "w0": self.w0, "z": self.z, "omega_ref": self.omega_ref}

    def gains(self, J_inertia: float) -> tuple[float, float]:
        """(Kp, Ki) for a rotor of inertia ``J_inertia``."""
        Ki = J_inertia * self.w0**2
        Kp = 2.0 * self.z * math.sqrt(J_inertia * Ki)
        return Kp, Ki

    def poles(self) -> tuple[float, float]:
        """Closed-loop poles (lambda_1 < lambda_2 < 0)."""
        _check_damping(self.z)
        r = math.sqrt(self.z**2 - 1.0)
        return (-self.z - r) * self.w0, (-self.z + r) * self.w0


def _check_damping(z):
    if not z > 1.0 + 1e-9:
        raise DampingTooLow(f"damping factor must exceed 1, got {z!r}")


def torque_deviation(cfg: SpeedLoopConfig, delta_T_m: float, t):
    """Electromagnetic torque minus the new load, after a load step at t = 0.

    Starts at ``-delta_T_m`` (torque is continuous across the step) and
    decays to zero.
    """
    l1, l2 = cfg.poles()
    t = np.asarray(t, dtype=float)
    out = delta_T_m / (l2 - l1) * (l1 * np.exp(l1 * t) - l2 * np.exp(l2 * t))
    return float(out) if out.ndim == 0 else out


def speed_deviation(cfg: SpeedLoopConfig, delta_T_m: float, J_inertia: float, t):
    """Mechanical speed error omega_r - omega_ref after a load step at t = 0.

    A load rise makes the speed sag: the result is <= 0 for delta_T_m > 0.
    """
    l1, l2 = cfg.poles()
    t = np.asarray(t, dtype=float)
    out = delta_T_m / (J_inertia * (l2 - l1)) * (np.exp(l1 * t) - np.exp(l2 * t))
    return float(out) if out.ndim == 0 else out


def torque_demand(cfg: SpeedLoopConfig, step, t):
    """Electromagnetic torque the speed loop asks for at time ``t``."""
    total = step.T_m + step.delta_T_m
    if cfg.mode == "ideal":
        return total if np.ndim(t) == 0 else np.full(np.shape(t), total)
    return total + torque_deviation(cfg, step.delta_T_m, t)


def i_sq_nonideal(cfg: SpeedLoopConfig, step, phi_r: float, t: float, p: int) -> float:
    """Quadrature current delivered by the PI loop (T_m + dT_m + delta(t)) / (p phi_r)."""
    return (step.T_m + step.delta_T_m + torque_deviation(cfg, step.delta_T_m, t)) / (p * phi_r)


def pi_initial_state(cfg: SpeedLoopConfig, params, step) -> tuple[float, float]:
    """(omega_r, integrator) in equilibrium with the pre-step load."""
    _, Ki = cfg.gains(params.J_inertia)
    return cfg.omega_ref, step.T_m / Ki


def closed_loop_dynamics(cfg: SpeedLoopConfig, params, step, phi_r, omega, xi, i_sd):
    """Rates of (phi_r, omega_r, PI integrator) under the post-step load.

    Returns ``(dphi, domega, dxi, i_sq)``. ``omega`` is the mechanical speed
    and ``xi`` the integral of the speed error.
    """
    Kp, Ki = cfg.gains(params.J_inertia)
    err = cfg.omega_ref - omega
    torque_ref = Kp * err + Ki * xi
    i_sq = torque_ref / (params.p * phi_r)
    dphi = -(params.RR / params.LM) * phi_r + params.RR * i_sd
    t_e = params.p * phi_r * i_sq
    domega = (t_e - (step.T_m + step.delta_T_m)) / params.J_inertia
    return dphi, domega, err, i_sq
