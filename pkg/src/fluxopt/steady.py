"""Steady-state loss-optimal operating points, saturation curves and the zeta rule."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, NegativeTorque, NoRoot
from .motor import MotorParams
from .numerics import find_root, scan_bracket

ZETA_TOL = 1e-11


@dataclass(frozen=True)
class SaturationCurve:
    """Main inductance as a function of the magnetizing current.

    ``constant``: L(i) = a. ``affine``: L(i) = max(a - b*i, L_min).
    ``tabulated``: linear interpolation through ``points`` (constant outside
    the table), floored at ``L_min``. Slopes are piecewise; at a kink the
    slope of the segment to the left is returned.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    points: tuple = ()
    L_min: float = 1e-9

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "tabulated"):
            raise ConfigError(f"unknown saturation curve kind {self.kind!r}")
        if not self.L_min > 0:
            raise ConfigError("L_min must be positive")
        if self.kind in ("constant", "affine") and not self.a > 0:
            raise ConfigError("saturation curve needs a positive 'a'")
        if self.kind == "affine" and not (math.isfinite(self.b) and self.b >= 0):
            raise ConfigError("affine saturation curve needs b >= 0")
        if self.kind == "tabulated":
            if len(self.points) < 2:
                raise ConfigError("tabulated curve needs at least two points")
            xs = [pt[0] for pt in self.points]
            if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
                raise ConfigError("tabulated curve currents must be strictly increasing")
            if any(pt[1] <= 0 for pt in self.points):
                raise ConfigError("tabulated inductances must be positive")

    @classmethod
    def constant(cls, L: float) -> "SaturationCurve":
        return cls("constant", a=float(L), L_min=float(L))

    @classmethod
    def affine(cls, a: float, b: float, L_min: Optional[float] = None) -> "SaturationCurve":
        return cls("affine", a=float(a), b=float(b), L_min=float(L_min if L_min is not None else 0.05 * a))

    @classmethod
    def tabulated(cls, points, L_min: Optional[float] = None) -> "SaturationCurve":
        pts = tuple((float(i), float(L)) for i, L in points)
        if L_min is None:
            L_min = 0.5 * min(L for _, L in pts) if pts else 1e-9
        return cls("tabulated", points=pts, L_min=float(L_min))

    @classmethod
    def default_affine(cls, params: MotorParams) -> "SaturationCurve":
        """Study curve L(i) = 2 LM - LM / (2 i_sd_nom) * i, i.e. 1.5 LM at nominal current."""
        return cls.affine(2.0 * params.LM, params.LM / (2.0 * params.i_sd_nom), L_min=0.1 * params.LM)

    @classmethod
    def from_dict(cls, data, params: Optional[MotorParams] = None) -> "SaturationCurve":
        if data is None or data == "constant" or (isinstance(data, dict) and data.get("kind") == "constant" and "a" not in data and "L" not in data):
            if params is None:
                raise ConfigError("constant curve without a value needs motor parameters")
            return cls.constant(params.LM)
        if data == "default" or data == "affine":
            if params is None:
                raise ConfigError("default affine curve needs motor parameters")
            return cls.default_affine(params)
        if not isinstance(data, dict):
            raise ConfigError(f"bad saturation spec {data!r}")
        kind = data.get("kind")
        try:
            if kind == "constant":
                return cls.constant(data.get("L", data.get("a")))
            if kind == "affine":
                if "a" not in data and params is not None:
                    return cls.default_affine(params)
                return cls.affine(data["a"], data["b"], data.get("L_min"))
            if kind == "tabulated":
                return cls.tabulated(data["points"], data.get("L_min"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad saturation spec {data!r}: {exc}") from exc
        raise ConfigError(f"unknown saturation curve kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "L": self.a}
        if self.kind == "affine":
            return {"kind": "affine", "a": self.a, "b": self.b, "L_min": self.L_min}
        return {"kind": "tabulated", "points": [list(pt) for pt in self.points], "L_min": self.L_min}

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "affine" and self.b == 0.0)

    def inductance(self, i: float) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "affine":
            return max(self.a - self.b * i, self.L_min)
        xs = [pt[0] for pt in self.points]
        Ls = [pt[1] for pt in self.points]
        return max(float(np.interp(i, xs, Ls)), self.L_min)

    def slope(self, i: float) -> float:
        """dL/di, left-continuous at kinks."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine":
            if self.b == 0.0 or i > (self.a - self.L_min) / self.b:
                return 0.0
            return -self.b
        pts = self.points
        xs = [pt[0] for pt in pts]
        if i <= xs[0] or i > xs[-1]:
            return 0.0
        k = bisect.bisect_left(xs, i)  # xs[k-1] < i <= xs[k]
        (x0, L0), (x1, L1) = pts[k - 1], pts[k]
        if L0 + (i - x0) * (L1 - L0) / (x1 - x0) <= self.L_min:
            return 0.0
        return (L1 - L0) / (x1 - x0)

    def flux(self, i: float) -> float:
        return self.inductance(i) * i


class OperatingPoint(NamedTuple):
    i_sd: float
    i_sq: float
    phi_r: float
    p_loss: float
    T_m: float


def gamma(params: MotorParams) -> float:
    """Load-independent optimal ratio i_sq / i_sd = sqrt(Rs / (RR + Rs))."""
    return math.sqrt(params.Rs / (params.RR + params.Rs))


def i_sd_opt_linear(params: MotorParams, T_m: float) -> float:
    """Loss-optimal magnetizing current for load torque ``T_m`` with constant LM."""
    if T_m < 0:
        raise NegativeTorque(f"T_m must be >= 0, got {T_m}")
    return math.sqrt(T_m / (params.p * gamma(params) * params.LM))


def steady_loss(params: MotorParams, sat: SaturationCurve, i_sd: float, T_m: float) -> float:
    """Steady copper loss at magnetizing current ``i_sd`` while producing ``T_m``."""
    i_sq = T_m / (params.p * sat.flux(i_sd))
    return i_sq * i_sq * (params.Rs + params.RR) + i_sd * i_sd * params.Rs


def stationarity_residual(params: MotorParams, sat: SaturationCurve, i_sd: float, i_sq: float) -> float:
    """dP_loss/di_sd at fixed torque, written in terms of the present i_sq."""
    L = sat.inductance(i_sd)
    return 2.0 * params.Rs * i_sd - 2.0 * (params.Rs + params.RR) * i_sq * i_sq * (
        1.0 / i_sd + sat.slope(i_sd) / L
    )


def stationarity_slope(params: MotorParams, sat: SaturationCurve, i_sd: float, i_sq: float) -> float:
    """d/di_sd of :func:`stationarity_residual` (curves are piecewise linear, so L'' = 0).

    Always positive: the residual is increasing and its root is unique.
    """
    L = sat.inductance(i_sd)
    r = sat.slope(i_sd) / L
    return 2.0 * params.Rs + 2.0 * (params.Rs + params.RR) * i_sq * i_sq * (1.0 / (i_sd * i_sd) + r * r)


def _newton(f, fprime, x, maxiter=8):
    """Plain Newton from a close guess; None if it does not settle quickly."""
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        d = fprime(x)
        if not d > 0.0:
            return None
        x_new = x - fx / d
        if not x_new > 0.0:
            return None
        if abs(x_new - x) <= 1e-14 * x_new:
            return x_new
        x = x_new
    return None


def _solve_first_root(f, lo, hi, guess=None, fprime=None):
    if guess is not None and guess > 0 and fprime is not None:
        root = _newton(f, fprime, guess)
        if root is not None:
            return root
    if guess is not None and guess > 0:
        for width in (1.02, 1.2, 2.0):
            a, b = guess / width, guess * width
            fa, fb = f(a), f(b)
            if fa <= 0.0 <= fb:
                return find_root(f, (a, b), tol=ZETA_TOL, xtol=4e-16 * b)
    for _ in range(5):
        br = scan_bracket(f, lo, hi)
        if br is not None:
            a, b = br
            if a == b:
                return a
            return find_root(f, (a, b), tol=ZETA_TOL, xtol=4e-16 * b)
        hi *= 2.0
    return None


def zeta(params: MotorParams, sat: SaturationCurve, i_sq: float, guess: Optional[float] = None) -> float:
    """Magnetizing current that zeroes the stationarity residual for this i_sq.

    The smallest positive root is returned. ``guess`` (e.g. the previous value
    along a trajectory) only speeds up bracketing.
    """
    if i_sq < 0:
        raise NegativeTorque(f"i_sq must be >= 0, got {i_sq}")
    if i_sq == 0:
        return 0.0
    lo = min(1e-6, 1e-3 * i_sq)
    root = _solve_first_root(
        lambda i: stationarity_residual(params, sat, i, i_sq),
        lo,
        10.0 * params.i_sd_nom,
        guess,
        lambda i: stationarity_slope(params, sat, i, i_sq),
    )
    if root is None:
        raise NoRoot(f"no stationary magnetizing current for i_sq={i_sq:.6g}")
    return root


def i_sd_opt(params: MotorParams, sat: Optional[SaturationCurve], T_m: float) -> float:
    """Loss-optimal steady magnetizing current for torque ``T_m`` on any curve."""
    if sat is None or sat.kind == "constant" and sat.a == params.LM:
        return i_sd_opt_linear(params, T_m)
    if T_m < 0:
        raise NegativeTorque(f"T_m must be >= 0, got {T_m}")
    if T_m == 0:
        return 0.0

    def resid(i):
        return stationarity_residual(params, sat, i, T_m / (params.p * sat.flux(i)))

    guess = math.sqrt(T_m / (params.p * gamma(params) * sat.inductance(0.0)))
    root = _solve_first_root(resid, 1e-6 * guess, 10.0 * params.i_sd_nom, None)
    if root is None:
        raise NoRoot(f"no loss-optimal magnetizing current for T_m={T_m:.6g}")
    return root


def operating_point(params: MotorParams, sat: Optional[SaturationCurve], T_m: float) -> OperatingPoint:
    curve = sat if sat is not None else SaturationCurve.constant(params.LM)
    i_sd = i_sd_opt(params, curve, T_m)
    phi = curve.flux(i_sd)
    i_sq = T_m / (params.p * phi) if T_m > 0 else 0.0
    return OperatingPoint(i_sd, i_sq, phi, steady_loss(params, curve, i_sd, T_m) if T_m > 0 else 0.0, T_m)


@dataclass(frozen=True)
class ZetaTable:
    """Lookup table i_sq -> zeta(i_sq) with linear interpolation between nodes."""

    i_sq: np.ndarray
    i_sd: np.ndarray

    def __call__(self, i_sq):
        return np.interp(i_sq, self.i_sq, self.i_sd)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i_sq", "i_sd"])
            for a, b in zip(self.i_sq, self.i_sd):
                w.writerow([f"{a:.12g}", f"{b:.12g}"])

    @classmethod
    def from_csv(cls, path) -> "ZetaTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def zeta_table(params: MotorParams, sat: SaturationCurve, i_sq_max: float, n: int = 256) -> ZetaTable:
    if n < 2:
        raise ValueError("zeta_table needs n >= 2")
    if not i_sq_max > 0:
        raise ValueError("i_sq_max must be positive")
    nodes = np.linspace(0.0, i_sq_max, n)
    values = np.empty(n)
    guess = None
    for k, q in enumerate(nodes):
        values[k] = zeta(params, sat, float(q), guess)
        guess = values[k] if values[k] > 0 else None
    return ZetaTable(nodes, values)
