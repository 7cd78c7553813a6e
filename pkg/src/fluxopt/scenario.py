"""Load-step scenarios from JSON, result summaries and the table suites."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError, FluxoptError
from .motor import MotorParams, load_motor
from .numerics import Grid
from .speed_loop import SpeedLoopConfig
from .steady import SaturationCurve
from .transient import (
    BVP_STRATEGIES,
    DEFAULT_EPSILON,
    LoadStep,
    Trajectory,
    auto_horizon,
    compare,
    default_dt,
    normalize_strategy,
    objective_for,
    run_strategy,
    transient_duration,
)

MOTOR_OVERRIDES = ("Rs", "RR", "LM", "J_inertia", "p", "i_sd_nom", "T_rated")


class SolverFailure(FluxoptError):
    """A numerical stage of a scenario failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def parse_motor(spec, overrides: Optional[dict] = None) -> MotorParams:
    """Preset name, JSON path, inline dict, or ``{"preset": name, <field>: value}``."""
    if isinstance(spec, MotorParams):
        motor = spec
    elif isinstance(spec, str):
        motor = load_motor(spec)
    elif isinstance(spec, dict):
        if "preset" in spec:
            motor = load_motor(spec["preset"])
            extra = {k: v for k, v in spec.items() if k != "preset"}
            overrides = {**extra, **(overrides or {})}
        else:
            motor = MotorParams.from_dict(spec)
    else:
        raise ConfigError(f"bad motor spec {spec!r}")
    if overrides:
        unknown = set(overrides) - set(MOTOR_OVERRIDES) - {"name"}
        if unknown:
            raise ConfigError(f"unknown motor overrides: {sorted(unknown)}")
        data = motor.to_dict()
        data.update(overrides)
        if "name" not in overrides:
            data["name"] = f"{motor.name}*"
        motor = MotorParams.from_dict(data)
    return motor


def parse_step(spec, motor: MotorParams) -> LoadStep:
    """Torque step from percentages of T_rated or absolute N m.

    Accepted forms: ``{"from": 10, "to": 100}`` (percent by default),
    ``{"from": 0.5, "to": 2.0, "unit": "Nm"}`` and
    ``{"T_m": 0.5, "delta_T_m": 1.5}``.
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"bad step spec {spec!r}")
    try:
        if "T_m" in spec:
            return LoadStep(float(spec["T_m"]), float(spec.get("delta_T_m", 0.0)))
        start, end = float(spec["from"]), float(spec["to"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad step spec {spec!r}: {exc}") from exc
    unit = spec.get("unit", "percent")
    if unit in ("percent", "%"):
        return LoadStep.from_percent(motor, start, end)
    if unit in ("Nm", "N m", "N*m"):
        return LoadStep(start, end - start)
    raise ConfigError(f"unknown torque unit {unit!r}; use 'percent' or 'Nm'")


@dataclass(frozen=True)
class ScenarioSpec:
    motor: MotorParams
    saturation: SaturationCurve
    step: LoadStep
    strategies: tuple
    controller: SpeedLoopConfig = SpeedLoopConfig()
    horizon: Optional[float] = None  # None: auto from the transient duration
    epsilon: float = DEFAULT_EPSILON
    dt: Optional[float] = None
    output_dir: Optional[Path] = None

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("a scenario needs at least one strategy")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError(f"horizon must be positive, got {self.horizon!r}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not 0 < self.epsilon <= 1:
            raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "ScenarioSpec":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {"motor", "saturation", "step", "strategies", "controller", "horizon", "dt", "epsilon", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        if "motor" not in data or "step" not in data:
            raise ConfigError("scenario needs 'motor' and 'step'")
        motor = parse_motor(data["motor"])
        sat = SaturationCurve.from_dict(data.get("saturation"), motor)
        step = parse_step(data["step"], motor)
        strategies = data.get("strategies", ["feedback"])
        if isinstance(strategies, str):
            strategies = [strategies]
        strategies = tuple(normalize_strategy(s) for s in strategies)
        controller = SpeedLoopConfig.from_dict(data.get("controller"))
        epsilon = float(data.get("epsilon", DEFAULT_EPSILON))
        horizon = data.get("horizon", "auto")
        if isinstance(horizon, dict):
            if horizon.get("mode", "fixed") == "auto":
                epsilon = float(horizon.get("epsilon", epsilon))
                horizon = None
            else:
                horizon = horizon.get("T")
        if horizon == "auto":
            horizon = None
        try:
            horizon = None if horizon is None else float(horizon)
            dt = None if data.get("dt") is None else float(data["dt"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad horizon/dt: {exc}") from exc
        out = data.get("output_dir")
        if out is not None:
            out = Path(out)
            if base_dir is not None and not out.is_absolute():
                out = Path(base_dir) / out
        return cls(motor, sat, step, strategies, controller, horizon, epsilon, dt, out)

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"scenario file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "motor": self.motor.to_dict(),
            "saturation": self.saturation.to_dict(),
            "step": {"T_m": self.step.T_m, "delta_T_m": self.step.delta_T_m},
            "strategies": list(self.strategies),
            "controller": self.controller.to_dict(),
            "horizon": self.horizon if self.horizon is not None else "auto",
            "epsilon": self.epsilon,
            "dt": self.dt,
        }


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    T: float
    dt: float
    trajectories: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def write(self, out_dir) -> list[Path]:
        """One CSV per strategy plus ``summary.json``; returns the written paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, traj in self.trajectories.items():
            path = out / f"{name}.csv"
            traj.to_csv(path)
            written.append(path)
        path = out / "summary.json"
        path.write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written


def _horizon_strategy(spec: ScenarioSpec) -> str:
    return "feedback" if spec.saturation.is_constant else "zeta"


def _strategy_summary(traj: Trajectory, epsilon: float) -> dict:
    try:
        duration = transient_duration(traj, epsilon)
    except FluxoptError:
        duration = None
    return {
        "J_loss": traj.energy("p_loss"),
        "J_dyn": traj.energy("p_dyn"),
        "J_delta_p": traj.energy("delta_p"),
        "transient_duration": duration,
        "lambda0": traj.lambda0,
        "flux_clamped": traj.flux_clamped,
    }


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    """Simulate/solve every strategy of ``spec`` on a common grid.

    Each BVP strategy in the run is compared against every non-BVP strategy
    on the objective it minimises.
    """
    dt = spec.dt or default_dt(spec.motor)
    if spec.horizon is None:
        try:
            T = auto_horizon(spec.motor, spec.saturation, spec.step, _horizon_strategy(spec), spec.controller, spec.epsilon, dt)
        except FluxoptError as exc:
            raise SolverFailure("horizon", exc) from exc
    else:
        T = spec.horizon
    grid = Grid.from_horizon(T, dt)
    result = ScenarioResult(spec, T, dt)
    for name in spec.strategies:
        try:
            result.trajectories[name] = run_strategy(spec.motor, spec.saturation, spec.step, name, spec.controller, grid)
        except (FluxoptError, ArithmeticError) as exc:
            raise SolverFailure(name, exc) from exc
    comparisons = []
    for exact in spec.strategies:
        if exact not in BVP_STRATEGIES:
            continue
        objective = objective_for(exact)
        for approx in spec.strategies:
            if approx in BVP_STRATEGIES:
                continue
            report = compare(result.trajectories[exact], result.trajectories[approx], objective)
            comparisons.append({"exact": exact, "approx": approx, "objective": objective, **report.to_dict()})
    result.summary = {
        "scenario": spec.to_dict(),
        "T": T,
        "dt": grid.step,
        "n_steps": grid.n_steps,
        "strategies": {name: _strategy_summary(tr, spec.epsilon) for name, tr in result.trajectories.items()},
        "comparisons": comparisons,
    }
    return result


# -- table suites ---------------------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    label: str
    T: float
    J1: float
    J2: float
    delta_J: float
    rel_err: float  # percent
    tau_R: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def as_list(self) -> list:
        return [self.label, self.tau_R, self.T, self.J1, self.J2, self.delta_J, self.rel_err, self.error]


TABLE_COLUMNS = ("label", "tau_R", "T", "J1", "J2", "delta_J", "rel_err_pct", "error")

# Horizons of the published exact-objective tables, one per preset.
TABLE1_HORIZONS = {"DRS71S4": 0.62, "DRS112M4": 2.27, "DRS160M4": 3.86}
TABLE2_HORIZONS = {"DRS71S4": 0.20, "DRS112M4": 0.70, "DRS160M4": 1.31}
TABLE3_HORIZON = 0.4
TABLE3_W0 = (20.0, 40.0, 60.0)
# saturation tables: both trajectories must reach the common end state
SAT_HORIZON_TAUS = 10.0


@dataclass(frozen=True)
class RowTask:
    label: str
    motor: MotorParams
    saturation: Optional[SaturationCurve]
    step: LoadStep
    exact: str
    approx: str
    T: float
    controller: SpeedLoopConfig = SpeedLoopConfig()
    dt: Optional[float] = None


def run_row(task: RowTask) -> TableRow:
    """Solve one table row; failures are recorded on the row, never raised."""
    m = task.motor
    sat = task.saturation or SaturationCurve.constant(m.LM)
    try:
        grid = Grid.from_horizon(task.T, task.dt or default_dt(m))
        exact = run_strategy(m, sat, task.step, task.exact, task.controller, grid)
        approx = run_strategy(m, sat, task.step, task.approx, task.controller, grid)
        rep = compare(exact, approx, objective_for(task.exact))
    except (FluxoptError, ArithmeticError, ValueError) as exc:
        nan = math.nan
        return TableRow(task.label, task.T, nan, nan, nan, nan, m.tau_R, f"{type(exc).__name__}: {exc}")
    return TableRow(task.label, task.T, rep.J1, rep.J2, rep.delta_J, 100.0 * rep.rel_err, m.tau_R)


SUITES = ("table1", "table2", "table3", "table4", "table5")


def suite_tasks(
    suite: str,
    motors: Optional[list] = None,
    dt: Optional[float] = None,
    w0: Optional[tuple] = None,
    z: Optional[float] = None,
    horizon: Optional[float] = None,
) -> list[RowTask]:
    """Rows of one of the table suites.

    ``motors`` replaces the three presets (table 3 uses only the first).
    ``horizon`` overrides every row's T.
    """
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    if motors is None:
        motors = [load_motor(n) for n in ("DRS71S4", "DRS112M4", "DRS160M4")]
    tasks = []
    if suite in ("table1", "table2"):
        start, end, table = (100, 10, TABLE1_HORIZONS) if suite == "table1" else (10, 100, TABLE2_HORIZONS)
        for m in motors:
            T = horizon or table.get(m.name, 10.0 * m.tau_R)
            step = LoadStep.from_percent(m, start, end)
            tasks.append(RowTask(m.name, m, None, step, "bvp_dyn", "feedback", T, dt=dt))
    elif suite == "table3":
        m = motors[0]
        step = LoadStep.from_percent(m, 25, 100)
        for w in w0 or TABLE3_W0:
            ctrl = SpeedLoopConfig(mode="analytic", w0=float(w), z=z if z is not None else 10.0)
            tasks.append(RowTask(f"w0={w:g}", m, None, step, "bvp_loss", "feedback", horizon or TABLE3_HORIZON, ctrl, dt))
    else:
        start, end = (25, 100) if suite == "table4" else (100, 25)
        for m in motors:
            sat = SaturationCurve.default_affine(m)
            step = LoadStep.from_percent(m, start, end)
            T = horizon or SAT_HORIZON_TAUS * m.tau_R
            tasks.append(RowTask(m.name, m, sat, step, "bvp_sat", "zeta", T, dt=dt))
    return tasks


def run_suite(suite: str, jobs: Optional[int] = None, **kwargs) -> list[TableRow]:
    """Run a table suite; rows are solved concurrently when ``jobs > 1``.

    ``jobs=None`` uses one worker per CPU. Rows come back in table order.
    """
    tasks = suite_tasks(suite, **kwargs)
    jobs = jobs if jobs is not None else (os.cpu_count() or 1)
    if jobs <= 1 or len(tasks) <= 1:
        return [run_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(run_row, tasks))


def rows_to_csv(rows: list[TableRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r.as_list()])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def format_rows(rows: list[TableRow]) -> str:
    """Console table in the paper's column order."""
    head = f"{'label':<12} {'tau_R':>7} {'T, s':>7} {'J1, J':>12} {'J2, J':>12} {'dJ, J':>10} {'dJ/J1, %':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        tau = f"{r.tau_R:.3f}" if r.tau_R is not None else ""
        if r.ok:
            lines.append(f"{r.label:<12} {tau:>7} {r.T:>7.3g} {r.J1:>12.5g} {r.J2:>12.5g} {r.delta_J:>10.4g} {r.rel_err:>9.4f}")
        else:
            lines.append(f"{r.label:<12} {tau:>7} {r.T:>7.3g}  FAILED: {r.error}")
    return "\n".join(lines)


def with_overrides(motor: MotorParams, **values) -> MotorParams:
    values = {k: v for k, v in values.items() if v is not None}
    return replace(motor, **values) if values else motor
