"""Reaction-diffusion model of blood coagulation: equilibria, waves and pulses."""
from importlib import resources as _resources

from .kinetics import HomotopySetup, KineticParams, eval_F, eval_F_tau, jacobian
from .equilibria import EquilibriumSet, find_equilibria
from .homotopy import GSpec, build_g, construct_q
from .waves import Grid, Profile, WaveResult
from .pulses import PulseResult

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled parameter fixture (``positive``, ``negative``, ``near_maxwell``, ``searched_seed0``)."""
    return _resources.files(__name__) / "fixtures" / f"{name}.json"


__all__ = [
    "EquilibriumSet",
    "GSpec",
    "Grid",
    "HomotopySetup",
    "KineticParams",
    "Profile",
    "PulseResult",
    "WaveResult",
    "build_g",
    "construct_q",
    "eval_F",
    "eval_F_tau",
    "find_equilibria",
    "fixture_path",
    "jacobian",
]
