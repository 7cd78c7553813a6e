"""Fixed-step integration, quadrature, bracketed root finding and single shooting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import NoSignChange, NonFiniteError, ShootingError


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t0, t0 + dt, ..., t_end`` with ``n_steps`` intervals."""

    t0: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t_end) and math.isfinite(self.dt)):
            raise ValueError("grid bounds must be finite")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end <= self.t0:
            raise ValueError("t_end must exceed t0")

    @classmethod
    def from_horizon(cls, T: float, dt: float, t0: float = 0.0) -> "Grid":
        return cls(t0, t0 + T, dt)

    @property
    def n_steps(self) -> int:
        return max(1, int(round((self.t_end - self.t0) / self.dt)))

    @property
    def step(self) -> float:
        """Actual step, so that ``n_steps`` intervals land exactly on ``t_end``."""
        return (self.t_end - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n_steps + 1)


class Solution(NamedTuple):
    t: np.ndarray
    y: np.ndarray  # shape (n_nodes, state_dim)


def integrate(
    dynamics: Callable[[float, Sequence[float]], Sequence[float]],
    initial_state: Sequence[float],
    grid: Grid,
    guard: Optional[Callable[[np.ndarray], bool]] = None,
) -> Solution:
    """Classical RK4 with a fixed step; returns the state at every grid node.

    ``dynamics(t, y)`` receives the state as a list of floats and may return
    any sequence of rates.

    ``guard(y)`` may return False to flag a state outside the admissible
    region; this is reported like a non-finite state.
    """
    y = [float(v) for v in initial_state]
    if not all(math.isfinite(v) for v in y):
        raise NonFiniteError("non-finite initial state", step=0)
    isfinite = math.isfinite
    n = grid.n_steps
    h = grid.step
    t = grid.times
    out = np.empty((n + 1, len(y)))
    out[0] = y
    half = 0.5 * h
    sixth = h / 6.0
    # plain floats: numpy's per-call overhead dominates for 1-4 states
    for k in range(n):
        tk = float(t[k])
        try:
            k1 = dynamics(tk, y)
            k2 = dynamics(tk + half, [a + half * b for a, b in zip(y, k1)])
            k3 = dynamics(tk + half, [a + half * b for a, b in zip(y, k2)])
            k4 = dynamics(tk + h, [a + h * b for a, b in zip(y, k3)])
            y_next = [a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        except OverflowError:
            # float ** raises instead of returning inf
            y_next = [math.inf]
        # the sum is finite only if every component is
        if not isfinite(sum(y_next)) or (guard is not None and not guard(y_next)):
            raise NonFiniteError(
                f"state left the admissible region at step {k + 1} (t={t[k + 1]:.6g})",
                step=k + 1,
                last_state=np.array(y),
            )
        y = y_next
        out[k + 1] = y
    return Solution(t, out)


def quadrature(samples, dt: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("quadrature needs at least two samples")
    return float(dt * (samples.sum() - 0.5 * (samples[0] + samples[-1])))


def find_root(
    f: Callable[[float], float],
    bracket: Sequence[float],
    tol: float = 1e-12,
    xtol: Optional[float] = None,
    maxiter: int = 200,
    f_bracket: Optional[Sequence[float]] = None,
) -> float:
    """Root of ``f`` inside ``bracket``: bisection accelerated by secant steps.

    Brent's safeguarding: a secant (or inverse quadratic) step is accepted
    only when it stays well inside the bracket and shrinks it fast enough,
    otherwise the interval is bisected. Stops when ``|f(x)| <= tol`` or the
    bracket is narrower than ``xtol`` (defaults to ``tol``). ``f_bracket``
    passes already known values of ``f`` at the bracket ends.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if xtol is None:
        xtol = tol
    fa, fb = (f(a), f(b)) if f_bracket is None else (float(f_bracket[0]), float(f_bracket[1]))
    if abs(fa) <= tol or abs(fb) <= tol:
        return a if abs(fa) <= abs(fb) else b
    if math.copysign(1.0, fa) == math.copysign(1.0, fb):
        raise NoSignChange(f"f({a:.6g})={fa:.3g} and f({b:.6g})={fb:.3g} have the same sign")
    eps = np.finfo(float).eps
    c, fc = a, fa
    d = e = b - a
    for _ in range(maxiter):
        if math.copysign(1.0, fb) == math.copysign(1.0, fc):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * eps * abs(b) + 0.5 * xtol
        half = 0.5 * (c - b)
        if abs(fb) <= tol or abs(half) <= tol1:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * half * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * half * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * half * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = half
        else:
            d = e = half
        a, fa = b, fb
        b = b + d if abs(d) > tol1 else b + math.copysign(tol1, half)
        fb = f(b)
        if not math.isfinite(fb):
            raise NonFiniteError(f"root function is not finite at x={b!r}")
    return b


def scan_bracket(f: Callable[[float], float], lo: float, hi: float, n: int = 48):
    """First sub-interval of a geometric scan of ``[lo, hi]`` where ``f`` changes sign.

    Returns ``None`` when no sign change is found. ``lo`` must be positive.
    """
    xs = np.geomspace(lo, hi, n)
    prev_x, prev_f = xs[0], f(xs[0])
    if prev_f == 0.0:
        return (prev_x, prev_x)
    for x in xs[1:]:
        fx = f(x)
        if fx == 0.0 or math.copysign(1.0, fx) != math.copysign(1.0, prev_f):
            return (prev_x, x)
        prev_x, prev_f = x, fx
    return None


@dataclass(frozen=True)
class ShootingProblem:
    """Scalar-in, scalar-out two-point boundary value problem.

    ``initial_known`` is the full initial state; the entry at
    ``unknown_index`` is overwritten by each candidate. The terminal
    condition is ``y[terminal_index](T) == terminal_target``.

    With ``log_terminal`` the miss is measured as
    ``target * log(y / target)``: same units and the same value to first
    order near the root, but far less lopsided when the terminal state grows
    exponentially with the unknown. Requires a positive state and target.
    """

    dynamics: Callable[[float, np.ndarray], np.ndarray]
    initial_known: tuple
    unknown_index: int
    terminal_index: int
    terminal_target: float
    guard: Optional[Callable[[Sequence[float]], bool]] = None
    log_terminal: bool = False

    @property
    def state_dim(self) -> int:
        return len(self.initial_known)

    def initial_state(self, unknown: float) -> np.ndarray:
        y0 = np.array(self.initial_known, dtype=float)
        y0[self.unknown_index] = unknown
        return y0


def _miss(problem: ShootingProblem, value: float) -> float:
    target = problem.terminal_target
    if problem.log_terminal:
        return target * math.log(max(value, 1e-300) / target)
    return value - target


def _shoot(problem: ShootingProblem, grid: Grid, unknown: float) -> float:
    try:
        sol = integrate(problem.dynamics, problem.initial_state(unknown), grid, problem.guard)
    except NonFiniteError as exc:
        # a diverged shot still tells us on which side of the target it went
        if exc.last_state is None:
            raise NonFiniteError(str(exc), step=exc.step, lambda0=unknown) from exc
        return _miss(problem, float(exc.last_state[problem.terminal_index]))
    return _miss(problem, float(sol.y[-1, problem.terminal_index]))


def solve_shooting(
    problem: ShootingProblem,
    grid: Grid,
    bracket: Sequence[float],
    tol: float,
    max_widen: int = 4,
) -> tuple[float, Solution]:
    """Find the unknown initial value so the terminal condition holds within ``tol``."""
    lo, hi = float(bracket[0]), float(bracket[1])
    residual = lambda u: _shoot(problem, grid, u)  # noqa: E731
    for attempt in range(max_widen + 1):
        r_lo, r_hi = residual(lo), residual(hi)
        if math.copysign(1.0, r_lo) != math.copysign(1.0, r_hi) or r_lo == 0 or r_hi == 0:
            break
        if attempt == max_widen:
            raise NoSignChange(
                f"terminal residual keeps its sign on [{lo:.6g}, {hi:.6g}] after {max_widen} widenings"
            )
        c, w = 0.5 * (lo + hi), hi - lo
        lo, hi = c - w, c + w
    xtol = 4.0 * np.finfo(float).eps * max(abs(lo), abs(hi), 1e-300)
    u = find_root(residual, (lo, hi), tol=0.5 * tol, xtol=xtol, f_bracket=(r_lo, r_hi))
    try:
        sol = integrate(problem.dynamics, problem.initial_state(u), grid, problem.guard)
    except NonFiniteError as exc:
        raise NonFiniteError(str(exc), step=exc.step, last_state=exc.last_state, lambda0=u) from exc
    miss = abs(sol.y[-1, problem.terminal_index] - problem.terminal_target)
    if not miss <= tol:
        raise ShootingError(
            f"terminal residual {miss:.3g} exceeds tol {tol:.3g} at unknown={u!r} "
            "(problem too sensitive for single shooting on this horizon)"
        )
    return u, sol
