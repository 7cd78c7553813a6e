import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxopt.errors import ConfigError
from fluxopt.motor import (
    PRESET_NAMES,
    CurrentsDQ,
    MotorParams,
    electromagnetic_torque,
    flux_derivative,
    load_motor,
    loss_arrays,
    loss_sample,
    speed_derivative,
)
from fluxopt.steady import SaturationCurve

finite = dict(allow_nan=False, allow_infinity=False)


def test_flux_derivative_examples(toy_motor):
    m = toy_motor
    assert flux_derivative(m, m.LM * 1.7, 1.7) == pytest.approx(0.0, abs=1e-15)
    assert flux_derivative(m, 0.8, 0.0) == pytest.approx(-0.8 / m.tau_R)
    assert flux_derivative(m, 1.0, 3.0) == pytest.approx(2.0)


def test_flux_derivative_rejects_nonfinite(toy_motor):
    with pytest.raises(ValueError):
        flux_derivative(toy_motor, math.nan, 1.0)
    with pytest.raises(ValueError):
        flux_derivative(toy_motor, 1.0, math.inf)


def test_speed_derivative_examples(toy_motor):
    m = toy_motor
    phi, T_m = 0.7, 1.2
    assert speed_derivative(m, phi, T_m / (m.p * phi), T_m) == pytest.approx(0.0, abs=1e-12)
    assert speed_derivative(m, phi, 0.0, 0.0) == 0.0
    assert speed_derivative(m, 0.5, 1.0, 0.5) == pytest.approx(100.0)


def test_torque_examples(toy_motor):
    assert electromagnetic_torque(toy_motor, 0.5, 0.0) == 0.0
    assert electromagnetic_torque(toy_motor, 0.5, 3.0) == pytest.approx(3.0)


@pytest.mark.parametrize("field", ["Rs", "RR", "LM", "J_inertia", "i_sd_nom", "T_rated"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_params_reject_nonpositive(toy_motor, field, bad):
    data = toy_motor.to_dict()
    data[field] = bad
    with pytest.raises(ConfigError):
        MotorParams(**data)


@pytest.mark.parametrize("p", [0, 1.5])
def test_params_reject_bad_pole_pairs(toy_motor, p):
    data = toy_motor.to_dict()
    data["p"] = p
    with pytest.raises(ConfigError):
        MotorParams(**data)


def test_presets_have_published_time_constants(all_presets):
    taus = {m.name: m.tau_R for m in all_presets}
    assert [m.name for m in all_presets] == list(PRESET_NAMES)
    assert taus["DRS71S4"] == pytest.approx(0.065, abs=5e-4)
    assert taus["DRS112M4"] == pytest.approx(0.238, abs=5e-4)
    assert taus["DRS160M4"] == pytest.approx(0.404, abs=5e-4)


def test_dict_round_trip(toy_motor):
    assert MotorParams.from_dict(toy_motor.to_dict()) == toy_motor


def test_from_dict_errors(toy_motor):
    data = toy_motor.to_dict()
    with pytest.raises(ConfigError):
        MotorParams.from_dict({**data, "Lsigma": 0.1})
    del data["RR"]
    with pytest.raises(ConfigError):
        MotorParams.from_dict(data)
    with pytest.raises(ConfigError):
        MotorParams.from_dict({**toy_motor.to_dict(), "Rs": "abc"})


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_motor("NOPE")


def test_preset_dir_override(tmp_path, monkeypatch, toy_motor):
    data = {**toy_motor.to_dict(), "name": "DRS71S4", "Rs": 42.0}
    (tmp_path / "DRS71S4.json").write_text(json.dumps(data))
    monkeypatch.setenv("FLUXOPT_PRESET_DIR", str(tmp_path))
    assert load_motor("DRS71S4").Rs == 42.0


def test_load_from_path(tmp_path, toy_motor):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(toy_motor.to_dict()))
    assert load_motor(str(path)) == toy_motor
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_motor(str(path))


@given(
    i_sd=st.floats(0, 50, **finite),
    i_sq=st.floats(-50, 50, **finite),
    phi=st.floats(1e-3, 5, **finite),
    curved=st.booleans(),
)
def test_loss_sample_invariants(toy_motor, i_sd, i_sq, phi, curved):
    sat = SaturationCurve.default_affine(toy_motor) if curved else None
    s = loss_sample(toy_motor, sat, CurrentsDQ(i_sd, i_sq), phi)
    assert s.p_dyn == s.p_loss + s.delta_p
    assert s.delta_p >= 0.0
    assert s.p_loss >= 0.0


def test_loss_arrays_match_samples(drs71):
    rng = np.random.default_rng(3)
    i_sd = rng.uniform(0, 3, 20)
    i_sq = rng.uniform(-2, 2, 20)
    phi = rng.uniform(0.1, 1.5, 20)
    sat = SaturationCurve.default_affine(drs71)
    arrays = loss_arrays(drs71, sat, i_sd, i_sq, phi)
    for k in range(20):
        s = loss_sample(drs71, sat, CurrentsDQ(i_sd[k], i_sq[k]), phi[k])
        assert [a[k] for a in arrays] == pytest.approx(list(s), rel=1e-14)


def test_steady_state_has_no_transient_loss(drs71):
    i_sd = 1.1
    s = loss_sample(drs71, None, CurrentsDQ(i_sd, 0.4), drs71.LM * i_sd)
    assert s.delta_p == pytest.approx(0.0, abs=1e-24)
    # d-axis copper loss uses the stator resistance
    assert s.p_loss == pytest.approx(0.4**2 * (drs71.Rs + drs71.RR) + i_sd**2 * drs71.Rs)
