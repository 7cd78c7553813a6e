"""Energy-optimal magnetizing current during a load-torque step.

Three optimisation problems share the same rotor-flux state:

* ``loss``: minimise the integral of the copper loss P_loss with constant LM.
  The minimum principle gives the feedback law i_sd = i_sq / gamma, which is
  exactly optimal under an ideal speed loop.
* ``dyn``: minimise the integral of P_dyn = P_loss + dP (rotor d-axis current
  included); only solvable numerically.
* ``sat``: minimise P_loss with a saturating main inductance L_m(i_sd); the
  zeta rule is the practical sub-optimal answer.

The exact solutions are computed by single shooting on the initial costate.
The magnetizing current is constrained to i_sd >= 0, so the Hamiltonian is
minimised over that half-line (this never binds on optimal trajectories but
keeps wild shots well behaved).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, NonFiniteError, NoRoot, NoSignChange, NotSettled, ShootingError
from .motor import FLUX_FLOOR, MotorParams, loss_arrays
from .numerics import Grid, ShootingProblem, find_root, integrate, quadrature, solve_shooting
from .speed_loop import SpeedLoopConfig, pi_initial_state, speed_deviation
from .steady import ZETA_TOL, SaturationCurve, _solve_first_root, gamma, i_sd_opt, zeta

STRATEGIES = ("nominal", "feedback", "step", "zeta", "bvp_loss", "bvp_dyn", "bvp_sat")
ALIASES = {"optimal": "zeta", "bvp_exact": "bvp_dyn", "bvp_ideal": "bvp_loss"}
BVP_STRATEGIES = ("bvp_loss", "bvp_dyn", "bvp_sat")

DEFAULT_EPSILON = 1e-3
DEFAULT_SHOOTING_RTOL = 1e-7


@dataclass(frozen=True)
class LoadStep:
    T_m: float  # torque before the step, N m
    delta_T_m: float  # step height, N m

    def __post_init__(self):
        if self.T_m < 0:
            raise ConfigError(f"pre-step torque must be >= 0, got {self.T_m}")
        if self.T_m + self.delta_T_m < -1e-12 * max(1.0, self.T_m):
            raise ConfigError("post-step torque must be >= 0")

    @classmethod
    def from_percent(cls, params: MotorParams, start_pct: float, end_pct: float) -> "LoadStep":
        T0 = params.T_rated * start_pct / 100.0
        T1 = params.T_rated * end_pct / 100.0
        return cls(T0, T1 - T0)

    @property
    def total(self) -> float:
        return max(self.T_m + self.delta_T_m, 0.0)

    @property
    def k(self) -> float:
        """Torque ratio (T_m + dT_m) / T_m."""
        if self.T_m <= 0:
            raise ValueError("k is undefined for a step from zero torque")
        return self.total / self.T_m


class CostateState(NamedTuple):
    phi_r: float
    lam: float


@dataclass(frozen=True)
class EnergyReport:
    J1: float  # exact solution
    J2: float  # approximate solution
    delta_J: float
    rel_err: float
    T: float

    @classmethod
    def from_energies(cls, J1: float, J2: float, T: float) -> "EnergyReport":
        return cls(J1, J2, J2 - J1, (J2 - J1) / J1, T)

    def to_dict(self) -> dict:
        return {"J1": self.J1, "J2": self.J2, "delta_J": self.delta_J, "rel_err": self.rel_err, "T": self.T}


def feedback_law(params: MotorParams, i_sq: float) -> float:
    """Optimal magnetizing current under an ideal speed loop: i_sq / gamma."""
    return i_sq / gamma(params)


# -- ideal problem: integral of P_loss, constant LM -------------------------


def hamiltonian_ideal(params: MotorParams, T_total: float, state: CostateState, i_sd: float) -> float:
    phi, lam = state
    i_sq = T_total / (params.p * phi)
    return (
        i_sq * i_sq * (params.Rs + params.RR)
        + i_sd * i_sd * params.Rs
        + lam * (-(params.RR / params.LM) * phi + params.RR * i_sd)
    )


def costate_rate_ideal(params: MotorParams, T_total: float, state: CostateState) -> float:
    """d(lambda)/dt = -dH/d(phi_r) for the ideal problem."""
    phi, lam = state
    i_sq = T_total / (params.p * phi)
    return (params.RR / params.LM) * lam + 2.0 * i_sq * i_sq / phi * (params.RR + params.Rs)


def i_sd_from_costate_ideal(params: MotorParams, lam: float) -> float:
    return max(0.0, -params.RR * lam / (2.0 * params.Rs))


# -- exact objective: integral of P_dyn ----------------------------------------


def hamiltonian_dyn(params: MotorParams, T_total: float, state: CostateState, i_sd: float) -> float:
    phi, lam = state
    i_rd = i_sd - phi / params.LM
    return hamiltonian_ideal(params, T_total, state, i_sd) + params.RR * i_rd * i_rd


def bvp_dyn_dynamics(params: MotorParams, T_total: float, state: CostateState):
    """``(dphi, dlam, i_sd)`` for the P_dyn problem; i_sd zeroes dH/di_sd."""
    phi, lam = state
    RR, Rs, LM = params.RR, params.Rs, params.LM
    i_sd = max(0.0, (2.0 * RR * phi / LM - RR * lam) / (2.0 * RR + 2.0 * Rs))
    i_sq = T_total / (params.p * phi)
    dphi = -(RR / LM) * phi + RR * i_sd
    dlam = RR * lam / LM + 2.0 * i_sq * i_sq * (RR + Rs) / phi + 2.0 * RR * (i_sd - phi / LM) / LM
    return dphi, dlam, i_sd


# -- saturated main inductance -------------------------------------------------


def hamiltonian_sat(params: MotorParams, sat: SaturationCurve, T_total: float, state: CostateState, i_sd: float) -> float:
    phi, lam = state
    i_sq = T_total / (params.p * phi)
    return (
        i_sq * i_sq * (params.Rs + params.RR)
        + i_sd * i_sd * params.Rs
        + lam * (-params.RR * phi / sat.inductance(i_sd) + params.RR * i_sd)
    )


def sat_stationarity(params: MotorParams, sat: SaturationCurve, state: CostateState, i_sd: float) -> float:
    """dH/di_sd of the saturated Hamiltonian."""
    phi, lam = state
    L = sat.inductance(i_sd)
    return params.RR * lam * (1.0 + phi * sat.slope(i_sd) / (L * L)) + 2.0 * params.Rs * i_sd


def sat_stationarity_slope(params: MotorParams, sat: SaturationCurve, state: CostateState, i_sd: float) -> float:
    """d/di_sd of :func:`sat_stationarity` for a piecewise-linear curve."""
    phi, lam = state
    L = sat.inductance(i_sd)
    Lp = sat.slope(i_sd)
    return 2.0 * params.Rs - 2.0 * params.RR * lam * phi * Lp * Lp / (L * L * L)


def sat_control(params: MotorParams, sat: SaturationCurve, state: CostateState, guess: Optional[float] = None) -> float:
    """Magnetizing current minimising the saturated Hamiltonian over i_sd >= 0."""
    g = lambda i: sat_stationarity(params, sat, state, i)  # noqa: E731
    if g(0.0) >= 0.0:
        return 0.0
    dg = lambda i: sat_stationarity_slope(params, sat, state, i)  # noqa: E731
    lo = 1e-9 * params.i_sd_nom
    if g(lo) >= 0.0:
        # tiny costate: the root lies below the scanned range
        return find_root(g, (0.0, lo), tol=ZETA_TOL, xtol=4e-16 * lo)
    root = _solve_first_root(g, lo, 10.0 * params.i_sd_nom, guess, dg)
    if root is None:
        raise NoRoot(f"no stationary i_sd for phi_r={state.phi_r:.6g}, lambda={state.lam:.6g}")
    return root


def bvp_sat_dynamics(params: MotorParams, sat: SaturationCurve, T_total: float, state: CostateState, guess=None):
    """``(dphi, dlam, i_sd)`` for the saturated P_loss problem."""
    phi, lam = state
    i_sd = sat_control(params, sat, state, guess)
    L = sat.inductance(i_sd)
    i_sq = T_total / (params.p * phi)
    dphi = -params.RR * phi / L + params.RR * i_sd
    dlam = params.RR * lam / L + 2.0 * (params.RR + params.Rs) * i_sq * i_sq / phi
    return dphi, dlam, i_sd


# -- peak ratios of the transient rotor loss -------------------------------------


def peak_ratio_decrease(params: MotorParams, k: float) -> float:
    """dP(0) / P_loss before the step, for a load decrease (0 <= k <= 1)."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"k must lie in [0, 1] for a load decrease, got {k}")
    return params.RR * (k - 1.0) ** 2 / (2.0 * params.Rs)


def peak_ratio_increase(params: MotorParams, k: float) -> float:
    """dP(0) / P_dyn(0) for a load increase (k >= 1); k = inf gives the limit."""
    RR, Rs = params.RR, params.Rs
    if math.isinf(k) and k > 0:
        return RR / (RR + 2.0 * Rs)
    if k < 1.0:
        raise ValueError(f"k must be >= 1 for a load increase, got {k}")
    return RR * (k - 1.0) ** 2 / (RR + RR * k * k + 2.0 * Rs * k * k - 2.0 * RR * k)


# -- trajectories ---------------------------------------------------------------

CSV_COLUMNS = ("t", "phi_r", "i_sd", "i_sq", "p_loss", "delta_p", "p_dyn", "omega_err")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    phi_r: np.ndarray
    i_sd: np.ndarray
    i_sq: np.ndarray
    p_loss: np.ndarray
    delta_p: np.ndarray
    p_dyn: np.ndarray
    omega_err: np.ndarray
    lam: Optional[np.ndarray] = None
    flux_clamped: bool = False
    strategy: str = ""
    lambda0: Optional[float] = None

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (len(self.t) - 1))

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])

    def energy(self, objective: str = "p_loss") -> float:
        """Integral of ``p_loss``, ``delta_p`` or ``p_dyn`` over the grid."""
        if objective not in ("p_loss", "delta_p", "p_dyn"):
            raise ValueError(f"unknown objective {objective!r}")
        return quadrature(getattr(self, objective), self.dt)

    def to_csv(self, path) -> None:
        cols = [getattr(self, c) for c in CSV_COLUMNS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in zip(*cols):
                w.writerow([f"{v:.12g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*(data[:, j] for j in range(len(CSV_COLUMNS))))


def transient_duration(traj, epsilon: float = DEFAULT_EPSILON) -> float:
    """Time after which |dP_dyn/dt| stays below ``epsilon * max|dP_dyn/dt|``.

    ``traj`` is a :class:`Trajectory` or a ``(t, p_dyn)`` pair. The derivative
    uses central differences on the grid. The returned time is the last
    node where the threshold is still reached, measured from ``t[0]``.
    """
    if isinstance(traj, Trajectory):
        t, p = traj.t, traj.p_dyn
    else:
        t, p = (np.asarray(a, dtype=float) for a in traj)
    if len(t) < 3:
        raise ValueError("transient_duration needs at least three samples")
    slope = np.abs(np.gradient(p, t))
    peak = slope.max()
    # a constant signal still leaves rounding noise in the differences
    if peak <= 1e-12 * np.max(np.abs(p)) / (t[-1] - t[0]):
        return 0.0
    above = np.nonzero(slope >= epsilon * peak)[0]
    last = int(above[-1])
    if last == len(t) - 1 and epsilon < 1.0:
        raise NotSettled(f"|dP_dyn/dt| still above {epsilon:g} of its peak at the end of the horizon")
    return float(t[last] - t[0])


def normalize_strategy(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGIES + tuple(ALIASES)}")
    return name


def default_dt(params: MotorParams) -> float:
    return params.tau_R / 2000.0


class _Plant:
    """Right-hand sides shared by all strategies.

    State layout: ``[phi_r, (lambda), (omega_r, integrator)]`` where the
    costate is present for BVP strategies and the PI states for the
    closed-loop speed controller.
    """

    def __init__(self, params, sat, step, controller, strategy):
        self.params = params
        self.sat = sat
        self.step = step
        self.ctrl = controller
        self.strategy = strategy
        self.has_lam = strategy in BVP_STRATEGIES
        self.closed = controller.mode == "closed_loop"
        self.i_pi = 2 if self.has_lam else 1
        self.total = step.total
        self.gamma = gamma(params)
        self.guess = None
        if controller.mode != "ideal":
            self.l1, self.l2 = controller.poles()
            self.coef = step.delta_T_m / (self.l2 - self.l1)
        if self.closed:
            self.Kp, self.Ki = controller.gains(params.J_inertia)
        if strategy == "step":
            self.i_step = i_sd_opt(params, sat, self.total)

    def torque(self, t, y):
        mode = self.ctrl.mode
        if mode == "ideal":
            return self.total
        if mode == "analytic":
            return self.total + self.coef * (self.l1 * math.exp(self.l1 * t) - self.l2 * math.exp(self.l2 * t))
        j = self.i_pi
        return self.Kp * (self.ctrl.omega_ref - y[j]) + self.Ki * y[j + 1]

    def evaluate(self, t, y):
        """Return ``(i_sd, i_sq, rates)`` at one state."""
        p = self.params
        phi = y[0]
        phi_e = phi if phi > FLUX_FLOOR else FLUX_FLOOR
        T_e = self.torque(t, y)
        i_sq = T_e / (p.p * phi_e)
        s = self.strategy
        dlam = None
        if s == "feedback":
            i_sd = i_sq / self.gamma
        elif s == "zeta":
            i_sd = zeta(p, self.sat, max(i_sq, 0.0), self.guess)
            self.guess = i_sd if i_sd > 0 else None
        elif s == "nominal":
            i_sd = p.i_sd_nom
        elif s == "step":
            i_sd = self.i_step
        elif s == "bvp_loss" and self.sat.is_constant:
            lam = y[1]
            i_sd = i_sd_from_costate_ideal(p, lam)
            dlam = (p.RR / p.LM) * lam + 2.0 * i_sq * i_sq / phi_e * (p.RR + p.Rs)
        elif s == "bvp_dyn":
            lam = y[1]
            _, dlam, i_sd = bvp_dyn_dynamics(p, T_e, CostateState(phi_e, lam))
        else:  # bvp_sat, or bvp_loss on a saturating curve
            state = CostateState(phi_e, y[1])
            try:
                _, dlam, i_sd = bvp_sat_dynamics(p, self.sat, T_e, state, self.guess)
            except NoRoot:
                return math.nan, i_sq, [math.nan] * len(y)
            self.guess = i_sd if i_sd > 0 else None
        L = self.sat.inductance(i_sd)
        dphi = -p.RR * phi / L + p.RR * i_sd
        rates = [dphi]
        if self.has_lam:
            rates.append(dlam)
        if self.closed:
            j = self.i_pi
            err = self.ctrl.omega_ref - y[j]
            domega = (p.p * phi_e * i_sq - self.total) / p.J_inertia
            rates += [domega, err]
        return i_sd, i_sq, rates

    def rhs(self, t, y):
        return self.evaluate(t, y)[2]

    def fast_rhs(self):
        """Inlined right-hand side for the costate problems with constant LM.

        Same arithmetic as :meth:`evaluate`; the general path costs several
        function calls per stage, which dominates single shooting.
        """
        if self.closed:
            return self.rhs
        if self.sat.kind == "affine" and not self.sat.is_constant and self.strategy in ("zeta",) + BVP_STRATEGIES:
            return self._affine_rhs()
        if not self.has_lam or not self.sat.is_constant or self.strategy == "bvp_sat":
            return self.rhs
        p = self.params
        RR, Rs, L, pp = p.RR, p.Rs, self.sat.inductance(0.0), float(p.p)
        a = RR / L
        exp = math.exp
        total = self.total
        analytic = self.ctrl.mode == "analytic"
        l1, l2, coef = (self.l1, self.l2, self.coef) if analytic else (0.0, 0.0, 0.0)
        floor = FLUX_FLOOR
        if self.strategy == "bvp_dyn":
            c_i = RR / (2.0 * RR + 2.0 * Rs)

            def f(t, y):
                phi, lam = y[0], y[1]
                if phi < floor:
                    phi = floor
                T_e = total + coef * (l1 * exp(l1 * t) - l2 * exp(l2 * t)) if analytic else total
                i_sq = T_e / (pp * phi)
                i_sd = c_i * (2.0 * phi / L - lam)
                if i_sd < 0.0:
                    i_sd = 0.0
                return (
                    -a * y[0] + RR * i_sd,
                    a * lam + 2.0 * i_sq * i_sq * (RR + Rs) / phi + 2.0 * a * (i_sd - phi / L),
                )

            return f
        c_i = -RR / (2.0 * Rs)

        def g(t, y):
            phi, lam = y[0], y[1]
            if phi < floor:
                phi = floor
            T_e = total + coef * (l1 * exp(l1 * t) - l2 * exp(l2 * t)) if analytic else total
            i_sq = T_e / (pp * phi)
            i_sd = c_i * lam
            if i_sd < 0.0:
                i_sd = 0.0
            return (-a * y[0] + RR * i_sd, a * lam + 2.0 * i_sq * i_sq / phi * (RR + Rs))

        return g

    def _affine_rhs(self):
        """Inlined zeta / saturated-costate right-hand side for an affine curve.

        The implicit i_sd is found by Newton from the previous stage's value
        (the residuals are monotone in i_sd); the bracketed solvers are the
        fallback.
        """
        p, sat = self.params, self.sat
        RR, Rs, pp = p.RR, p.Rs, float(p.p)
        A, B, L_min = sat.a, sat.b, sat.L_min
        i_knee = (A - L_min) / B
        c2 = 2.0 * (Rs + RR)
        exp = math.exp
        total = self.total
        analytic = self.ctrl.mode == "analytic"
        l1, l2, coef = (self.l1, self.l2, self.coef) if analytic else (0.0, 0.0, 0.0)
        floor = FLUX_FLOOR
        guess = None

        def curve(x):
            if x <= i_knee:
                L = A - B * x
                return L, -B / L
            return L_min, 0.0

        if self.strategy == "zeta":

            def f_zeta(t, y):
                nonlocal guess
                phi = y[0]
                phi_e = phi if phi > floor else floor
                T_e = total + coef * (l1 * exp(l1 * t) - l2 * exp(l2 * t)) if analytic else total
                i_sq = T_e / (pp * phi_e)
                i_sd = None
                if i_sq > 0.0 and guess is not None:
                    q2 = i_sq * i_sq
                    x = guess
                    for _ in range(8):
                        L, r = curve(x)
                        x_new = x - (2.0 * Rs * x - c2 * q2 * (1.0 / x + r)) / (2.0 * Rs + c2 * q2 * (1.0 / (x * x) + r * r))
                        if not x_new > 0.0:
                            break
                        if abs(x_new - x) <= 1e-14 * x_new:
                            i_sd = x_new
                            break
                        x = x_new
                if i_sd is None:
                    i_sd = zeta(p, sat, max(i_sq, 0.0), guess)
                guess = i_sd if i_sd > 0 else None
                L = curve(i_sd)[0]
                return (-RR * phi / L + RR * i_sd,)

            return f_zeta

        g0_slope = -B / (A * A) if i_knee > 0 else 0.0

        def f_sat(t, y):
            nonlocal guess
            phi, lam = y[0], y[1]
            phi_e = phi if phi > floor else floor
            T_e = total + coef * (l1 * exp(l1 * t) - l2 * exp(l2 * t)) if analytic else total
            i_sq = T_e / (pp * phi_e)
            i_sd = None
            if RR * lam * (1.0 + phi_e * g0_slope) >= 0.0:
                i_sd = 0.0
            elif guess is not None:
                x = guess
                for _ in range(8):
                    L, r = curve(x)
                    # r = L'/L, so phi L'/L^2 = phi r / L
                    g = RR * lam * (1.0 + phi_e * r / L) + 2.0 * Rs * x
                    dg = 2.0 * Rs - 2.0 * RR * lam * phi_e * r * r / L
                    x_new = x - g / dg
                    if not x_new > 0.0:
                        break
                    if abs(x_new - x) <= 1e-14 * x_new:
                        i_sd = x_new
                        break
                    x = x_new
            if i_sd is None:
                try:
                    i_sd = sat_control(p, sat, CostateState(phi_e, lam), guess)
                except NoRoot:
                    return (math.nan, math.nan)
            guess = i_sd if i_sd > 0 else None
            L = curve(i_sd)[0]
            return (-RR * phi / L + RR * i_sd, RR * lam / L + c2 * i_sq * i_sq / phi_e)

        return f_sat

    def initial_state(self, phi0, lam0=0.0):
        y = [phi0]
        if self.has_lam:
            y.append(lam0)
        if self.closed:
            y += list(pi_initial_state(self.ctrl, self.params, self.step))
        return y

    def record(self, sol, lambda0=None) -> Trajectory:
        n = len(sol.t)
        i_sd = np.empty(n)
        i_sq = np.empty(n)
        self.guess = None
        for k in range(n):
            i_sd[k], i_sq[k], _ = self.evaluate(sol.t[k], sol.y[k])
        phi = sol.y[:, 0]
        p_loss, delta_p, p_dyn = loss_arrays(self.params, None if self.sat.is_constant and self.sat.a == self.params.LM else self.sat, i_sd, i_sq, phi)
        if self.ctrl.mode == "ideal":
            werr = np.zeros(n)
        elif self.ctrl.mode == "analytic":
            werr = speed_deviation(self.ctrl, self.step.delta_T_m, self.params.J_inertia, sol.t)
        else:
            werr = sol.y[:, self.i_pi] - self.ctrl.omega_ref
        return Trajectory(
            t=sol.t,
            phi_r=phi,
            i_sd=i_sd,
            i_sq=i_sq,
            p_loss=p_loss,
            delta_p=delta_p,
            p_dyn=p_dyn,
            omega_err=np.asarray(werr, dtype=float),
            lam=sol.y[:, 1] if self.has_lam else None,
            flux_clamped=bool(np.any(phi <= FLUX_FLOOR)),
            strategy=self.strategy,
            lambda0=lambda0,
        )


def boundary_fluxes(params: MotorParams, sat: SaturationCurve, step: LoadStep) -> tuple[float, float]:
    """Steady loss-optimal flux before and after the step."""
    i0 = i_sd_opt(params, sat, step.T_m)
    i1 = i_sd_opt(params, sat, step.total)
    return sat.flux(i0), sat.flux(i1)


def _costate_guess(params, sat, strategy, phi0, i_guess):
    """Initial costate that would produce ``i_guess`` at t = 0."""
    RR, Rs = params.RR, params.Rs
    if strategy == "bvp_dyn":
        return (2.0 * RR * phi0 / params.LM - (2.0 * RR + 2.0 * Rs) * i_guess) / RR
    L = sat.inductance(i_guess)
    return -2.0 * Rs * i_guess / (RR * (1.0 + phi0 * sat.slope(i_guess) / (L * L)))


# a warm start only pays off once the horizon is a few rotor time constants
WARM_START_TAUS = 3.0


def _first_bracket(params, sat, strategy, plant, phi0):
    # the approximate rule at t = 0 gives a costate of the right magnitude
    i_sq0 = plant.torque(0.0, plant.initial_state(phi0)) / (params.p * phi0)
    if sat.is_constant:
        i0 = i_sq0 / gamma(params)
    else:
        i0 = zeta(params, sat, max(i_sq0, 0.0))
    g = _costate_guess(params, sat, strategy, phi0, max(i0, 1e-9))
    w = abs(g) + 2.0 * params.Rs / params.RR * params.i_sd_nom
    return g - 0.5 * w, g + 0.5 * w


def _warm_width(done, T_next, tau):
    """Half-width of the bracket around the last stage's costate."""
    lam = done[-1][1]
    if len(done) == 1:
        w = 0.05 * abs(lam)
    else:
        (T_a, lam_a), (T_b, lam_b) = done[-2], done[-1]
        rate = 2.0 / tau
        if len(done) >= 3:
            # observed decay rate of the stage-to-stage changes
            T_z, lam_z = done[-3]
            d1, d2 = abs(lam_a - lam_z), abs(lam_b - lam_a)
            if d1 > 0 and d2 > 0:
                rate = min(max(math.log(d1 / d2) / (T_a - T_z), 0.5 / tau), 20.0 / tau)
        # distance to the long-horizon limit ~ last change times its decay
        w = 4.0 * abs(lam_b - lam_a) * math.exp(-rate * (T_b - T_a))
    return max(w, 1e-9 * abs(lam), 1e-12)


def _shoot_with_warm_start(params, sat, strategy, plant, problem, grid, tol, phi0):
    """Shoot over successively longer horizons, reusing each initial costate.

    The optimal initial costate converges exponentially as the horizon
    grows, while the shot sensitivity grows exponentially, so a short solve
    brackets the long one tightly.
    """
    tau = sat.inductance(params.i_sd_nom) / params.RR
    T = grid.t_end - grid.t0
    horizons = [T]
    while horizons[-1] > WARM_START_TAUS * tau:
        horizons.append(max(horizons[-1] / 1.5, 0.75 * WARM_START_TAUS * tau))
    horizons.reverse()
    done = []  # (horizon, initial costate) of the solved stages
    # the intermediate stages only need a guess: a coarser step is plenty
    coarse = max(grid.step, min(4.0 * grid.step, tau / 200.0))
    for T_k in horizons:
        last = T_k == T
        g_k = grid if last else Grid.from_horizon(T_k, coarse, grid.t0)
        tol_k = tol if last else 1e3 * tol
        if not done:
            try:
                lam, sol = solve_shooting(problem, g_k, _first_bracket(params, sat, strategy, plant, phi0), tol_k, max_widen=6)
            except (NoSignChange, ShootingError, NonFiniteError):
                i_max = 5.0 * params.i_sd_nom
                default = (-10.0 * (2.0 * params.Rs / params.RR) * i_max, 10.0 * i_max)
                lam, sol = solve_shooting(problem, g_k, default, tol_k)
        else:
            lam_b = done[-1][1]
            w = _warm_width(done, T_k, tau)
            lam, sol = solve_shooting(problem, g_k, (lam_b - w, lam_b + w), tol_k, max_widen=40)
        done.append((T_k, lam))
    return lam, sol


def solve_bvp(
    params: MotorParams,
    sat: SaturationCurve,
    step: LoadStep,
    strategy: str,
    grid: Grid,
    controller: Optional[SpeedLoopConfig] = None,
    tol: Optional[float] = None,
    bracket=None,
    phi_T: Optional[float] = None,
) -> Trajectory:
    """Exact optimal trajectory from single shooting on the initial costate.

    The flux starts at the steady optimum for ``T_m`` and must reach the
    steady optimum for ``T_m + dT_m`` (or ``phi_T`` if given) at the end of
    ``grid``.
    """
    strategy = normalize_strategy(strategy)
    if strategy not in BVP_STRATEGIES:
        raise ConfigError(f"{strategy!r} is not a boundary value strategy")
    if strategy == "bvp_dyn" and not sat.is_constant:
        raise ConfigError("bvp_dyn is defined for a constant main inductance only")
    if strategy == "bvp_sat" and sat.is_constant:
        strategy = "bvp_loss"
    controller = controller or SpeedLoopConfig()
    plant = _Plant(params, sat, step, controller, strategy)
    phi0, phiT = boundary_fluxes(params, sat, step)
    if phi_T is not None:
        if not phi_T > 0:
            raise ConfigError(f"terminal flux must be positive, got {phi_T!r}")
        phiT = float(phi_T)
    if tol is None:
        tol = DEFAULT_SHOOTING_RTOL * max(phiT, phi0)
    upper = 1e3 * max(phi0, phiT, sat.flux(params.i_sd_nom))
    guard = lambda y: FLUX_FLOOR < y[0] < upper  # noqa: E731

    problem = ShootingProblem(plant.fast_rhs(), tuple(plant.initial_state(phi0)), 1, 0, phiT, guard, log_terminal=True)
    if bracket is not None:
        lam0, sol = solve_shooting(problem, grid, bracket, tol)
    else:
        lam0, sol = _shoot_with_warm_start(params, sat, strategy, plant, problem, grid, tol, phi0)
    return plant.record(sol, lambda0=lam0)


def simulate(
    params: MotorParams,
    sat: SaturationCurve,
    step: LoadStep,
    strategy: str,
    grid: Grid,
    controller: Optional[SpeedLoopConfig] = None,
    phi0: Optional[float] = None,
) -> Trajectory:
    """Forward simulation of a non-BVP strategy."""
    strategy = normalize_strategy(strategy)
    if strategy in BVP_STRATEGIES:
        raise ConfigError(f"{strategy!r} needs solve_bvp")
    controller = controller or SpeedLoopConfig()
    plant = _Plant(params, sat, step, controller, strategy)
    if phi0 is None:
        if strategy == "nominal":
            phi0 = sat.flux(params.i_sd_nom)
        else:
            phi0 = boundary_fluxes(params, sat, step)[0]
    sol = integrate(plant.fast_rhs(), plant.initial_state(phi0), grid)
    return plant.record(sol)


def run_strategy(
    params: MotorParams,
    sat: Optional[SaturationCurve],
    step: LoadStep,
    strategy: str,
    controller: Optional[SpeedLoopConfig] = None,
    grid: Optional[Grid] = None,
    tol: Optional[float] = None,
) -> Trajectory:
    """Closed-loop trajectory of one magnetizing-current strategy.

    ``grid`` defaults to ``[0, 10 tau_R]`` with ``dt = tau_R / 2000``.
    """
    sat = sat if sat is not None else SaturationCurve.constant(params.LM)
    if grid is None:
        grid = Grid.from_horizon(10.0 * params.tau_R, default_dt(params))
    strategy = normalize_strategy(strategy)
    if strategy in BVP_STRATEGIES:
        return solve_bvp(params, sat, step, strategy, grid, controller, tol)
    return simulate(params, sat, step, strategy, grid, controller)


def objective_for(strategy: str) -> str:
    return "p_dyn" if normalize_strategy(strategy) == "bvp_dyn" else "p_loss"


def compare(exact: Trajectory, approx: Trajectory, objective: str = "p_loss") -> EnergyReport:
    return EnergyReport.from_energies(exact.energy(objective), approx.energy(objective), exact.T)


def auto_horizon(
    params: MotorParams,
    sat: SaturationCurve,
    step: LoadStep,
    strategy: str = "feedback",
    controller: Optional[SpeedLoopConfig] = None,
    epsilon: float = DEFAULT_EPSILON,
    dt: Optional[float] = None,
    window: float = 20.0,
) -> float:
    """Transient duration of ``strategy`` found by simulating a long window.

    The window (in multiples of tau_R) is doubled up to three times if the
    transient has not settled.
    """
    dt = dt or default_dt(params)
    for _ in range(4):
        grid = Grid.from_horizon(window * params.tau_R, dt)
        traj = simulate(params, sat, step, strategy, grid, controller)
        try:
            T = transient_duration(traj, epsilon)
        except NotSettled:
            window *= 2.0
            continue
        return max(T, 10 * dt)
    raise NotSettled(f"transient of {strategy!r} did not settle within {window / 2:g} tau_R")
