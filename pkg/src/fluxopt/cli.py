"""Command line entry point: ``fluxopt {steady,simulate,table,ratio,zeta-table}``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, FluxoptError
from .motor import MotorParams
from .numerics import Grid
from .scenario import (
    SUITES,
    ScenarioSpec,
    SolverFailure,
    format_rows,
    parse_motor,
    rows_to_csv,
    run_scenario,
    run_suite,
)
from .steady import SaturationCurve, gamma, operating_point, zeta_table
from .transient import LoadStep, peak_ratio_decrease, peak_ratio_increase, simulate

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

INLINE = (
    ("--rs", "Rs", float),
    ("--rr", "RR", float),
    ("--lm", "LM", float),
    ("--J", "J_inertia", float),
    ("--p", "p", int),
    ("--inom", "i_sd_nom", float),
    ("--trated", "T_rated", float),
)
DEFAULT_K = (0.0, 0.25, 0.5, 2.0, 5.0, 10.0)


def _add_motor_args(ap):
    ap.add_argument("--motor", help="preset name or motor JSON file (default DRS71S4)")
    for flag, dest, typ in INLINE:
        ap.add_argument(flag, dest=dest, type=typ, help=f"override {dest}")
    ap.add_argument("--curve", default=None, help="'constant', 'affine' (study curve) or a curve JSON file")


def _add_common(ap):
    ap.add_argument("--config", help="scenario JSON file")
    ap.add_argument("--out", help="output directory (or file for ratio/zeta-table)")
    ap.add_argument("--dt", type=float, help="integration step, s (default tau_R/2000)")
    ap.add_argument("--epsilon", type=float, help="transient threshold (default 0.001)")
    ap.add_argument("--w0", type=float, action="append", help="speed-loop natural frequency, rad/s (repeatable for table3)")
    ap.add_argument("--z", type=float, help="speed-loop damping factor (> 1)")
    ap.add_argument("--strategy", action="append", help="strategy to run (repeatable)")


def _motor(args) -> MotorParams:
    overrides = {dest: getattr(args, dest) for _, dest, _ in INLINE if getattr(args, dest, None) is not None}
    spec = args.motor
    if spec is None:
        if {"Rs", "RR", "LM"} <= set(overrides) and len(overrides) == len(INLINE):
            return MotorParams(name="inline", **overrides)
        spec = "DRS71S4"
    return parse_motor(spec, overrides or None)


def _curve(args, motor):
    value = getattr(args, "curve", None)
    if value is None or value == "constant":
        return SaturationCurve.constant(motor.LM)
    if value in ("affine", "default"):
        return SaturationCurve.default_affine(motor)
    path = Path(value)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"curve file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return SaturationCurve.from_dict(data, motor)


def cmd_steady(args) -> int:
    motor = _motor(args)
    sat = _curve(args, motor)
    if args.torque is not None:
        T = args.torque
    else:
        T = motor.T_rated * (args.percent if args.percent is not None else 100.0) / 100.0
    if T < 0:
        raise ConfigError("torque must be >= 0")
    op = operating_point(motor, sat, T)
    print(f"motor     {motor.name}")
    print(f"gamma     {gamma(motor):.5f}")
    print(f"T_m       {T:.6g} N m")
    print(f"i_sd_opt  {op.i_sd:.6g} A")
    print(f"i_sq_opt  {op.i_sq:.6g} A")
    print(f"phi_r     {op.phi_r:.6g} Wb")
    print(f"P_loss    {op.p_loss:.6g} W")
    if args.zeta_table:
        table = zeta_table(motor, sat, args.i_sq_max or 2.0 * max(op.i_sq, motor.i_sd_nom), args.zeta_table)
        print("i_sq,i_sd")
        for a, b in zip(table.i_sq, table.i_sd):
            print(f"{a:.12g},{b:.12g}")
    return EXIT_OK


def _scenario_from_args(args) -> ScenarioSpec:
    """Scenario from ``--config`` (if any) with command-line flags layered on top."""
    out = args.out
    if args.config:
        base = ScenarioSpec.from_json(args.config)
        data = base.to_dict()
        data["motor"] = base.motor
        out = out or base.output_dir
    else:
        motor = _motor(args)
        data = {
            "motor": motor,
            "saturation": _curve(args, motor).to_dict(),
            "step": {"from": 10, "to": 100},
            "strategies": ["bvp_dyn", "feedback"],
        }
    if args.step:
        data["step"] = {"from": args.step[0], "to": args.step[1]}
    if args.horizon is not None:
        data["horizon"] = args.horizon
    if args.strategy:
        data["strategies"] = args.strategy
    if args.dt is not None:
        data["dt"] = args.dt
    if args.epsilon is not None:
        data["epsilon"] = args.epsilon
    if args.w0 or args.z is not None:
        ctrl = dict(data.get("controller") or {})
        if ctrl.get("mode", "ideal") == "ideal":
            ctrl["mode"] = "analytic"
        if args.w0:
            ctrl["w0"] = args.w0[-1]
        if args.z is not None:
            ctrl["z"] = args.z
        data["controller"] = ctrl
    if out is not None:
        data["output_dir"] = str(out)
    return ScenarioSpec.from_dict(data)


def cmd_simulate(args) -> int:
    spec = _scenario_from_args(args)
    result = run_scenario(spec)
    for name, s in result.summary["strategies"].items():
        dur = s["transient_duration"]
        dur = f"{dur:.4g} s" if dur is not None else "n/a"
        print(f"{name:<10} J_loss={s['J_loss']:.6g} J  J_dyn={s['J_dyn']:.6g} J  transient={dur}")
    for c in result.summary["comparisons"]:
        print(
            f"{c['exact']} vs {c['approx']} ({c['objective']}): J1={c['J1']:.6g} J2={c['J2']:.6g} "
            f"dJ={c['delta_J']:.4g} rel={100 * c['rel_err']:.4f}%"
        )
    if spec.output_dir is not None:
        for path in result.write(spec.output_dir):
            print(f"wrote {path}")
    return EXIT_OK


def cmd_table(args) -> int:
    kwargs = {"dt": args.dt, "z": args.z, "w0": tuple(args.w0) if args.w0 else None, "horizon": args.horizon}
    if args.motor or any(getattr(args, d, None) is not None for _, d, _ in INLINE):
        kwargs["motors"] = [_motor(args)]
    rows = run_suite(args.suite, jobs=args.jobs, **kwargs)
    print(args.suite)
    print(format_rows(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{args.suite}.csv"
        rows_to_csv(rows, path)
        print(f"wrote {path}")
    failed = [r for r in rows if not r.ok]
    if failed:
        print(f"error: {len(failed)} row(s) failed in stage 'table {args.suite}'", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def ratio_rows(motor: MotorParams, ks, base_pct: float = 10.0, dt=None):
    """(k, analytic, simulated) peak ratios of the transient rotor loss.

    The simulated ratio comes from the feedback-law trajectory at t = 0
    after a step from ``base_pct`` of rated torque to ``k`` times that.
    """
    sat = SaturationCurve.constant(motor.LM)
    T0 = motor.T_rated * base_pct / 100.0
    rows = []
    for k in ks:
        if k < 0:
            raise ConfigError(f"k must be >= 0, got {k}")
        step = LoadStep(T0, (k - 1.0) * T0)
        grid = Grid.from_horizon(10 * (dt or motor.tau_R / 2000.0), dt or motor.tau_R / 2000.0)
        tr = simulate(motor, sat, step, "feedback", grid)
        if k <= 1.0:
            prev = operating_point(motor, sat, T0).p_loss
            rows.append((k, peak_ratio_decrease(motor, k), tr.delta_p[0] / prev))
        else:
            rows.append((k, peak_ratio_increase(motor, k), tr.delta_p[0] / tr.p_dyn[0]))
    return rows


def cmd_ratio(args) -> int:
    motor = _motor(args)
    ks = args.k if args.k else DEFAULT_K
    rows = ratio_rows(motor, ks, dt=args.dt)
    lines = ["k,analytic,simulated"] + [f"{k:.12g},{a:.12g},{s:.12g}" for k, a, s in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    worst = max(abs(a - s) for _, a, s in rows)
    print(f"max |analytic - simulated| = {worst:.3g}", file=sys.stderr)
    return EXIT_OK


def cmd_zeta_table(args) -> int:
    motor = _motor(args)
    sat = _curve(args, motor) if args.curve is not None else SaturationCurve.default_affine(motor)
    i_sq_max = args.i_sq_max or 2.0 * motor.T_rated / (motor.p * sat.flux(motor.i_sd_nom))
    table = zeta_table(motor, sat, i_sq_max, args.n)
    if args.out:
        table.to_csv(args.out)
        print(f"wrote {args.out} ({args.n} rows)")
    else:
        print("i_sq,i_sd")
        for a, b in zip(table.i_sq, table.i_sd):
            print(f"{a:.12g},{b:.12g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fluxopt", description="Energy-optimal magnetizing current for induction motors.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="steady-state loss-optimal operating point")
    _add_motor_args(p)
    _add_common(p)
    p.add_argument("--torque", type=float, help="load torque, N m")
    p.add_argument("--percent", type=float, help="load torque, percent of T_rated (default 100)")
    p.add_argument("--zeta-table", type=int, metavar="N", help="also print an N-point zeta table")
    p.add_argument("--i-sq-max", type=float, help="upper end of the zeta table, A")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("simulate", help="run one load-step scenario")
    _add_motor_args(p)
    _add_common(p)
    p.add_argument("--step", type=float, nargs=2, metavar=("FROM", "TO"), help="load step in percent of T_rated")
    p.add_argument("--horizon", type=float, help="fixed horizon T, s (default: auto)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="reproduce one of the published tables")
    p.add_argument("suite", choices=SUITES)
    _add_motor_args(p)
    _add_common(p)
    p.add_argument("--horizon", type=float, help="override every row's horizon, s")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("ratio", help="peak ratios of the transient rotor loss")
    _add_motor_args(p)
    _add_common(p)
    p.add_argument("--k", type=float, nargs="+", help=f"torque ratios (default {' '.join(map(str, DEFAULT_K))})")
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("zeta-table", help="tabulate the zeta rule")
    _add_motor_args(p)
    _add_common(p)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--i-sq-max", type=float, help="upper end of the table, A")
    p.set_defaults(func=cmd_zeta_table)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SolverFailure as exc:
        print(f"error: solver failure in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FluxoptError as exc:
        print(f"error: solver failure in stage '{args.command}': {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
