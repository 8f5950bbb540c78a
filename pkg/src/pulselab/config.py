"""Run configuration: schema validation, defaults and hashing."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import IoError, SchemaError
from .kinetics import KineticParams
from .reporting import config_hash

DEFAULTS = {
    "name": "run",
    "seed": 0,
    "tau_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
    "homotopy": {"tau1": 0.5, "margin": 2.0, "g": None},
    # wave runs on [-L, L] with N cells
    "grid": {"L": 100.0, "N": 2000},
    "sim": {"dt": None, "t_end": 30.0, "stride": 50, "stepper": "explicit"},
    "pulse": {"dx": 0.01, "L": None},
    "continuation": {"dtau0": 0.05, "dtau_max": 0.1, "dtau_min": 1e-4, "newton_tol": 1e-10, "eta_fraction": 0.1},
    "dichotomy": {"speed_floor": 0.02},
    "threshold": {"lambdas": [0.6, 0.8, 1.2, 1.5], "L": 80.0, "N": 1600, "t_end": 40.0},
    "samples": {"n": 1000},
}

_POSITIVE = {
    ("grid", "L"), ("grid", "N"), ("sim", "dt"), ("sim", "t_end"), ("sim", "stride"), ("pulse", "dx"),
    ("pulse", "L"), ("continuation", "dtau0"), ("continuation", "dtau_max"), ("continuation", "dtau_min"),
    ("continuation", "newton_tol"), ("continuation", "eta_fraction"), ("homotopy", "margin"),
    ("threshold", "L"), ("threshold", "N"), ("threshold", "t_end"), ("samples", "n"),
}


@dataclass
class RunConfig:
    params: KineticParams
    options: dict  # every non-parameter section with defaults filled
    source: str | None = None

    def resolved(self) -> dict:
        return {"params": self.params.to_dict(), **self.options}

    @property
    def hash(self) -> str:
        return config_hash(self.resolved())

    def __getitem__(self, key):
        return self.options[key]

    def refined(self) -> "RunConfig":
        """Double the resolution of the wave and pulse grids."""
        opts = copy.deepcopy(self.options)
        opts["grid"]["N"] *= 2
        opts["pulse"]["dx"] /= 2
        opts["threshold"]["N"] *= 2
        if opts["sim"]["dt"] is not None:
            opts["sim"]["dt"] /= 4
        opts["sim"]["stride"] *= 4
        return RunConfig(self.params, opts, self.source)


def _merge(section: str, given, default):
    if not isinstance(default, dict) or default is None:
        return given
    if given is None:
        return copy.deepcopy(default)
    if not isinstance(given, dict):
        raise SchemaError(f"'{section}' must be an object")
    unknown = sorted(set(given) - set(default))
    if unknown:
        raise SchemaError(f"unknown key '{section}.{unknown[0]}'")
    out = copy.deepcopy(default)
    out.update(given)
    return out


def _check_number(name, value, positive):
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{name} must be a number")
    if positive and not value > 0:
        raise SchemaError(f"{name} must be > 0")


def from_dict(data: dict, source: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise SchemaError("config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS) - {"params"})
    if unknown:
        key = unknown[0]
        hint = " (v1 and v2 have no capacity)" if key in ("rho1", "rho2") else ""
        raise SchemaError(f"unknown key '{key}'{hint}")
    if "params" not in data:
        raise SchemaError("missing key 'params'")
    if not isinstance(data["params"], dict):
        raise SchemaError("'params' must be an object")
    params = KineticParams.from_dict(data["params"])
    opts = {}
    for key, default in DEFAULTS.items():
        opts[key] = _merge(key, data.get(key), default) if isinstance(default, dict) else data.get(key, copy.deepcopy(default))
    for section, key in _POSITIVE:
        _check_number(f"{section}.{key}", opts[section][key], True)
    for key in ("N", "stride"):
        for section in ("grid", "sim", "threshold"):
            if key in opts[section] and not float(opts[section][key]).is_integer():
                raise SchemaError(f"{section}.{key} must be an integer")
    tau1 = opts["homotopy"]["tau1"]
    _check_number("homotopy.tau1", tau1, True)
    if not tau1 < 1:
        raise SchemaError("homotopy.tau1 must lie in (0, 1)")
    if opts["sim"]["stepper"] not in ("explicit", "imex"):
        raise SchemaError("sim.stepper must be 'explicit' or 'imex'")
    g = opts["homotopy"]["g"]
    if g is not None:
        if not isinstance(g, dict) or sorted(g) != ["A", "m", "r"]:
            raise SchemaError("homotopy.g must be an object with keys m, r, A")
        for k in ("m", "r", "A"):
            _check_number(f"homotopy.g.{k}", g[k], k != "A")
    grid = [float(t) for t in opts["tau_grid"]]
    if not grid or any(not 0.0 <= t <= 1.0 for t in grid):
        raise SchemaError("tau_grid entries must lie in [0, 1]")
    opts["tau_grid"] = grid
    lams = opts["threshold"]["lambdas"]
    if not isinstance(lams, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in lams):
        raise SchemaError("threshold.lambdas must be a list of non-negative numbers")
    if not isinstance(opts["seed"], int) or isinstance(opts["seed"], bool):
        raise SchemaError("seed must be an integer")
    return RunConfig(params, opts, source)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data, str(path))
