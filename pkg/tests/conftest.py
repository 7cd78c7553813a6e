import pytest
from hypothesis import settings

from fluxopt.motor import MotorParams, load_motor, presets

# simulations inside property tests take longer than hypothesis' default deadline
settings.register_profile("fluxopt", deadline=None, max_examples=40)
settings.load_profile("fluxopt")


@pytest.fixture(scope="session")
def drs71():
    return load_motor("DRS71S4")


@pytest.fixture(scope="session")
def all_presets():
    return presets()


@pytest.fixture(scope="session")
def toy_motor():
    """Round numbers used by the arithmetic examples."""
    return MotorParams(Rs=1.0, RR=2.0, LM=0.5, J_inertia=0.01, p=2, i_sd_nom=2.0, T_rated=4.0, name="toy")
