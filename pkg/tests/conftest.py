import json

import numpy as np
import pytest

from pulselab import equilibria, experiments, homotopy, pulses, waves
from pulselab import fixture_path
from pulselab.kinetics import KineticParams

ACCEPTANCE_LINES = []


def load_params(name):
    return KineticParams.from_dict(json.loads(fixture_path(name).read_text())["params"])


def all_ones(**changes):
    names = KineticParams.__dataclass_fields__
    return KineticParams(**{**{n: 1.0 for n in names}, **changes})


def cubic(a):
    return lambda u: u * (u - a) * (1.0 - u)


@pytest.fixture(scope="session")
def pos_params():
    return load_params("positive")


@pytest.fixture(scope="session")
def neg_params():
    return load_params("negative")


@pytest.fixture(scope="session")
def pos_eq(pos_params):
    return equilibria.find_equilibria(pos_params)


@pytest.fixture(scope="session")
def neg_eq(neg_params):
    return equilibria.find_equilibria(neg_params)


@pytest.fixture(scope="session")
def pos_g(pos_params, pos_eq):
    return homotopy.build_g(pos_params, pos_eq, 0.5)


@pytest.fixture(scope="session")
def pos_hom(pos_g):
    return homotopy.homotopy_from_g(pos_g[0])


@pytest.fixture(scope="session")
def neg_hom(neg_params, neg_eq):
    return homotopy.homotopy_from_g(homotopy.build_g(neg_params, neg_eq, 0.5)[0])


@pytest.fixture(scope="session")
def wave_setup():
    return waves.wave_grid(100.0, 0.1), waves.SimConfig(t_end=30.0, stride=50)


@pytest.fixture(scope="session")
def pos_wave(pos_params, pos_hom, pos_eq, wave_setup):
    grid, sim = wave_setup
    return waves.wave_speed_system(pos_params, pos_hom, 0.0, pos_eq, grid, sim)


@pytest.fixture(scope="session")
def neg_wave(neg_params, neg_hom, neg_eq, wave_setup):
    grid, sim = wave_setup
    return waves.wave_speed_system(neg_params, neg_hom, 0.0, neg_eq, grid, sim)


@pytest.fixture(scope="session")
def pos_pulse1(pos_params, pos_hom, pos_eq):
    return pulses.system_pulse_tau1(pos_params, pos_hom, dx=0.01, upper=pos_eq.T_minus)


@pytest.fixture(scope="session")
def pos_pulse0(pos_params, pos_hom, pos_eq, pos_pulse1):
    return pulses.continue_pulse(pos_params, pos_hom, pos_pulse1, pos_eq.w_minus)


@pytest.fixture(scope="session")
def acceptance_log():
    def log(number, ok, detail):
        ACCEPTANCE_LINES.append(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def neg_attempt(neg_params, neg_hom, neg_eq):
    return experiments.attempt_pulse(neg_params, neg_hom, neg_eq)
