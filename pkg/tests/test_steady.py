import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxopt.errors import ConfigError, NegativeTorque
from fluxopt.motor import MotorParams
from fluxopt.steady import (
    SaturationCurve,
    ZetaTable,
    gamma,
    i_sd_opt,
    i_sd_opt_linear,
    operating_point,
    stationarity_residual,
    steady_loss,
    zeta,
    zeta_table,
)


def motor(Rs=1.0, RR=1.0, LM=0.5, i_nom=2.0):
    return MotorParams(Rs=Rs, RR=RR, LM=LM, J_inertia=0.01, p=2, i_sd_nom=i_nom, T_rated=4.0)


def p_loss_fixed_torque(m, sat, i_sd, T):
    i_sq = T / (m.p * sat.flux(i_sd))
    return i_sq**2 * (m.Rs + m.RR) + i_sd**2 * m.Rs


# -- gamma and the linear optimum -------------------------------------------------


def test_gamma_examples():
    assert gamma(motor(1, 1)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert gamma(motor(1, 3)) == pytest.approx(0.5)
    assert gamma(motor(1, 1e-12)) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(1e-4, 1e4), st.floats(1e-4, 1e4))
def test_gamma_in_unit_interval(Rs, RR):
    assert 0.0 < gamma(motor(Rs, RR)) < 1.0


def test_i_sd_opt_linear_examples(drs71):
    assert i_sd_opt_linear(drs71, 0.0) == 0.0
    with pytest.raises(NegativeTorque):
        i_sd_opt_linear(drs71, -1.0)


def test_i_sd_opt_linear_grid_oracle(all_presets):
    for m in all_presets:
        T = 0.6 * m.T_rated
        sat = SaturationCurve.constant(m.LM)
        best = i_sd_opt_linear(m, T)
        grid = np.linspace(0.01, 5 * m.i_sd_nom, 10_000)
        losses = [p_loss_fixed_torque(m, sat, i, T) for i in grid]
        assert p_loss_fixed_torque(m, sat, best, T) <= min(losses) * (1 + 1e-12)


@given(st.floats(1e-3, 1e3))
def test_i_sd_opt_ratio_and_square_root_law(T):
    m = motor(1.3, 0.9)
    i = i_sd_opt_linear(m, T)
    i_sq = T / (m.p * m.LM * i)
    assert i_sq / i == pytest.approx(gamma(m), rel=1e-12)
    assert i_sd_opt_linear(m, 4 * T) == pytest.approx(2 * i, rel=1e-14)


# -- stationarity residual ----------------------------------------------------------


def test_residual_zero_at_linear_optimum():
    m = motor(1.3, 0.9)
    sat = SaturationCurve.constant(m.LM)
    i_sq = 0.8
    assert abs(stationarity_residual(m, sat, i_sq / gamma(m), i_sq)) <= 1e-12


@pytest.mark.parametrize("curve", ["constant", "affine"])
def test_residual_matches_central_difference(drs71, curve):
    m = drs71
    sat = SaturationCurve.constant(m.LM) if curve == "constant" else SaturationCurve.default_affine(m)
    T = 0.7 * m.T_rated
    h = 1e-6 * m.i_sd_nom
    for i in np.linspace(0.3, 2.5, 7) * m.i_sd_nom:
        i_sq = T / (m.p * sat.flux(i))
        fd = (p_loss_fixed_torque(m, sat, i + h, T) - p_loss_fixed_torque(m, sat, i - h, T)) / (2 * h)
        assert stationarity_residual(m, sat, i, i_sq) == pytest.approx(fd, rel=1e-6)


def test_residual_sign_brackets_minimum(drs71):
    sat = SaturationCurve.default_affine(drs71)
    i_sq = 0.5
    root = zeta(drs71, sat, i_sq)
    assert stationarity_residual(drs71, sat, 0.9 * root, i_sq) < 0
    assert stationarity_residual(drs71, sat, 1.1 * root, i_sq) > 0


# -- zeta ------------------------------------------------------------------------


def test_zeta_constant_curve_is_feedback_law():
    m = motor(1.3, 0.9)
    sat = SaturationCurve.constant(m.LM)
    for q in (0.1, 1.0, 7.0):
        assert zeta(m, sat, q) == pytest.approx(q / gamma(m), rel=1e-10)
    assert zeta(m, sat, 0.0) == 0.0


def test_zeta_beats_constant_rule_on_affine_curve(drs71):
    m = drs71
    sat = SaturationCurve.default_affine(m)
    qs = np.linspace(0.01, 2.0, 100) * m.i_sd_nom
    # the saturated loss as a function of i_sd with the torque fixed
    for q in qs:
        T = m.p * sat.flux(zeta(m, sat, q)) * q
        z = zeta(m, sat, q)
        assert p_loss_fixed_torque(m, sat, z, T) <= p_loss_fixed_torque(m, sat, q / gamma(m), T) + 1e-12


@given(q=st.floats(0.01, 3.0), depth=st.floats(0.0, 0.45))
def test_zeta_root_is_a_minimum(drs71, q, depth):
    m = drs71
    sat = SaturationCurve.affine(2 * m.LM, depth * 2 * m.LM / m.i_sd_nom, L_min=0.1 * m.LM)
    i_sq = q * m.i_sd_nom
    z = zeta(m, sat, i_sq)
    assert abs(stationarity_residual(m, sat, z, i_sq)) <= 1e-9 * max(1.0, 2 * m.Rs * z)
    h = 1e-4 * m.i_sd_nom
    second = (stationarity_residual(m, sat, z + h, i_sq) - stationarity_residual(m, sat, z - h, i_sq)) / (2 * h)
    assert second > 0


def test_zeta_continuity(drs71):
    sat = SaturationCurve.default_affine(drs71)
    h = 1e-3 * drs71.i_sd_nom
    qs = np.linspace(0.0, 3.0, 60) * drs71.i_sd_nom
    C = max(abs(zeta(drs71, sat, q + h) - zeta(drs71, sat, q)) / h for q in qs)
    assert math.isfinite(C) and C < 1e3


def test_i_sd_opt_on_curve_is_steady_optimum(drs71):
    sat = SaturationCurve.default_affine(drs71)
    T = drs71.T_rated
    i = i_sd_opt(drs71, sat, T)
    grid = np.linspace(0.05, 5, 5000) * drs71.i_sd_nom
    assert steady_loss(drs71, sat, i, T) <= min(steady_loss(drs71, sat, g, T) for g in grid) * (1 + 1e-12)
    # zeta of the steady i_sq returns the same point
    op = operating_point(drs71, sat, T)
    assert zeta(drs71, sat, op.i_sq) == pytest.approx(op.i_sd, rel=1e-9)
    assert drs71.p * op.phi_r * op.i_sq == pytest.approx(T, rel=1e-12)
    assert op.phi_r == pytest.approx(sat.inductance(op.i_sd) * op.i_sd, rel=1e-14)


# -- zeta tables -----------------------------------------------------------------


def test_zeta_table_constant_curve():
    m = motor(1.3, 0.9)
    tab = zeta_table(m, SaturationCurve.constant(m.LM), 5.0, n=8)
    assert np.allclose(tab.i_sd, tab.i_sq / gamma(m), rtol=1e-10)
    assert tab(2.345) == pytest.approx(2.345 / gamma(m), rel=1e-10)


def test_zeta_table_interpolation_error(drs71):
    sat = SaturationCurve.default_affine(drs71)
    q_max = 3 * drs71.i_sd_nom
    tab = zeta_table(drs71, sat, q_max, n=256)
    assert tab.i_sd[-1] == zeta(drs71, sat, q_max)
    assert np.all(np.diff(tab.i_sd) > 0)
    qs = np.linspace(q_max / 1000, q_max, 777)
    exact = np.array([zeta(drs71, sat, q) for q in qs])
    assert np.max(np.abs(tab(qs) / exact - 1)) <= 5e-3


@given(depth=st.floats(0.0, 0.45), n=st.integers(2, 40))
def test_zeta_table_monotone(drs71, depth, n):
    sat = SaturationCurve.affine(2 * drs71.LM, depth * 2 * drs71.LM / drs71.i_sd_nom, L_min=0.1 * drs71.LM)
    tab = zeta_table(drs71, sat, 2 * drs71.i_sd_nom, n=n)
    assert np.all(np.diff(tab.i_sd) > 0)


def test_zeta_table_csv_round_trip(tmp_path, drs71):
    sat = SaturationCurve.default_affine(drs71)
    tab = zeta_table(drs71, sat, 2.0, n=64)
    tab.to_csv(tmp_path / "z.csv")
    back = ZetaTable.from_csv(tmp_path / "z.csv")
    assert np.allclose(back.i_sd, tab.i_sd, rtol=1e-11)


def test_zeta_table_arguments(drs71):
    sat = SaturationCurve.default_affine(drs71)
    with pytest.raises(ValueError):
        zeta_table(drs71, sat, 1.0, n=1)
    with pytest.raises(ValueError):
        zeta_table(drs71, sat, 0.0)


# -- saturation curves -------------------------------------------------------------


def test_default_affine_curve(drs71):
    sat = SaturationCurve.default_affine(drs71)
    assert sat.inductance(0.0) == pytest.approx(2 * drs71.LM)
    assert sat.inductance(drs71.i_sd_nom) == pytest.approx(1.5 * drs71.LM)
    assert sat.slope(drs71.i_sd_nom) == pytest.approx(-drs71.LM / (2 * drs71.i_sd_nom))
    # floor over the admissible range
    assert min(sat.inductance(i) for i in np.linspace(0, 10 * drs71.i_sd_nom, 101)) >= sat.L_min > 0


def test_tabulated_curve_slopes():
    sat = SaturationCurve.tabulated([(0, 1.0), (1, 0.8), (2, 0.5)])
    assert sat.inductance(0.5) == pytest.approx(0.9)
    assert sat.slope(0.5) == pytest.approx(-0.2)
    # left slope at a node
    assert sat.slope(1.0) == pytest.approx(-0.2)
    assert sat.slope(1.5) == pytest.approx(-0.3)
    assert sat.slope(3.0) == 0.0


def test_curve_from_dict(drs71):
    assert SaturationCurve.from_dict({"kind": "affine", "a": 1.0, "b": 0.1}).inductance(1.0) == pytest.approx(0.9)
    tab = SaturationCurve.from_dict({"kind": "tabulated", "points": [[0, 1.0], [2, 0.6]]})
    assert tab.inductance(1.0) == pytest.approx(0.8)
    assert SaturationCurve.from_dict("default", drs71) == SaturationCurve.default_affine(drs71)
    assert SaturationCurve.from_dict(None, drs71).inductance(5.0) == drs71.LM
    for bad in ({"kind": "cubic"}, {"kind": "affine", "a": -1, "b": 0}, {"kind": "tabulated", "points": [[1, 1.0], [0, 1.0]]}):
        with pytest.raises(ConfigError):
            SaturationCurve.from_dict(bad, drs71)


def test_curve_dict_round_trip(drs71):
    for sat in (
        SaturationCurve.constant(0.3),
        SaturationCurve.default_affine(drs71),
        SaturationCurve.tabulated([(0, 1.0), (2, 0.6)]),
    ):
        assert SaturationCurve.from_dict(sat.to_dict(), drs71) == sat
