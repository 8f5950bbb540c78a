"""Command-line entry point: ``pulselab <command> --config FILE [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 domain error
(parameters outside the analysed regime), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

import numpy as np

from . import equilibria, experiments, pulses, reporting, waves
from .config import RunConfig, parse_config
from .errors import (
    ConfigError,
    DomainError,
    MonitorViolated,
    NewtonDiverged,
    NoPulseExpected,
    NumericalError,
    PulselabError,
    StageFailed,
)

COMMANDS = ("equilibria", "stability", "wave", "pulse", "continue", "dichotomy", "threshold", "suite")
EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pulselab", description="Coagulation reaction-diffusion pulses and waves.")
    p.add_argument("command", choices=COMMANDS, metavar="command", help=" | ".join(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="seed for sampling (overrides config)")
    p.add_argument("--tau-grid", type=_float_list, default=None, help="comma-separated tau values")
    p.add_argument("--lambda", dest="lambdas", type=_float_list, default=None, help="comma-separated threshold multipliers")
    p.add_argument("--refine", action="store_true", help="double grid resolution")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    opts = copy.deepcopy(cfg.options)
    if args.seed is not None:
        opts["seed"] = args.seed
    if args.tau_grid is not None:
        if any(not 0.0 <= t <= 1.0 for t in args.tau_grid):
            raise ConfigError("--tau-grid values must lie in [0, 1]")
        opts["tau_grid"] = args.tau_grid
    if args.lambdas is not None:
        if any(v < 0 for v in args.lambdas):
            raise ConfigError("--lambda values must be non-negative")
        opts["threshold"]["lambdas"] = args.lambdas
    cfg = RunConfig(cfg.params, opts, cfg.source)
    return cfg.refined() if args.refine else cfg


class _Runner:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.chash = cfg.hash
        self.params = cfg.params
        self._eq = None
        self._hom = None

    @property
    def eq(self):
        if self._eq is None:
            self._eq = equilibria.find_equilibria(self.params)
        return self._eq

    @property
    def hom(self):
        if self._hom is None:
            self._hom, self._G = experiments.build_homotopy(self.params, self.eq, self.cfg)
        return self._hom

    def write(self, name, payload):
        path = reporting.write_json(self.out / name, {"config": self.cfg.resolved(), **payload}, self.chash)
        print(f"wrote {path}")

    def equilibria(self):
        eq = self.eq
        self.write("equilibria.json", eq.to_dict())
        print(f"T_plus=0 T_bar={eq.T_bar:.10g} T_minus={eq.T_minus:.10g}")

    def stability(self):
        stab = equilibria.classify_stability(self.params, self.hom, self.eq, self.cfg["tau_grid"])
        mono = experiments.monotone_sweep(self.params, self.hom, self.eq, self.cfg["tau_grid"],
                                          int(self.cfg["samples"]["n"]), self.cfg["seed"])
        self.write("stability.json", {**stab.to_dict(), "monotone": mono})
        print("sign triple (plus, bar, minus):", stab.sign_triple())

    def wave(self):
        grid, sim = experiments.wave_settings(self.cfg)
        taus = self.cfg["tau_grid"] if self._tau_grid_given else [0.0]
        results = experiments.sweep_map(
            lambda tau: waves.wave_speed_system(self.params, self.hom, tau, self.eq, grid, sim), taus
        )
        for tau, res in zip(taus, results):
            reporting.write_csv(self.out / f"front_tau{tau:g}.csv", ["t", "x_front"],
                                np.column_stack([res.times, res.front_positions]), self.chash)
            print(f"tau={tau:g} c={res.c:.8g} +- {res.stderr:.2g}")
        self.write("wave.json", {"results": [r.to_dict() for r in results]})

    def _pulse0(self):
        pc = self.cfg["pulse"]
        cont = experiments.continuation_settings(self.cfg)
        try:
            start = pulses.system_pulse_tau1(self.params, self.hom, dx=pc["dx"], L=pc["L"], upper=self.eq.T_minus)
            return start, pulses.continue_pulse(self.params, self.hom, start, self.eq.w_minus, cont)
        except (NewtonDiverged, MonitorViolated) as exc:
            grid, sim = experiments.wave_settings(self.cfg)
            res = waves.wave_speed_system(self.params, self.hom, 0.0, self.eq, grid, sim)
            if res.c <= 0:
                raise NoPulseExpected(
                    f"wave speed c = {res.c:.6g} <= 0, so no pulse exists; continuation stopped: {exc}"
                ) from exc
            raise

    def _write_pulse(self, stem, pulse):
        cert = pulses.verify_pulse(self.params, self.hom, pulse.tau, pulse.grid, pulse.values, self.eq.w_minus)
        reporting.write_profile(self.out / f"{stem}.csv", pulse.grid.x, pulse.values, self.chash)
        self.write(f"{stem}.json", {**pulse.certificate(), "verification": cert.to_dict()})

    def pulse(self):
        start, end = self._pulse0()
        self._write_pulse("pulse_tau1", start)
        self._write_pulse("pulse_tau0", end)
        print(f"pulse at tau=0: T(0)={end.values[7, 0]:.10g} residual={end.residual_sup:.2e}")

    def continue_(self):
        pc = self.cfg["pulse"]
        cur = pulses.system_pulse_tau1(self.params, self.hom, dx=pc["dx"], L=pc["L"], upper=self.eq.T_minus)
        base = experiments.continuation_settings(self.cfg)
        path = []
        for tau in sorted(set(self.cfg["tau_grid"]) | {1.0}, reverse=True):
            if tau < cur.tau:
                cfg = pulses.ContinuationConfig(**{**base.__dict__, "target": tau})
                cur = pulses.continue_pulse(self.params, self.hom, cur, self.eq.w_minus, cfg)
                path.extend(cur.path[1:])
            self._write_pulse(f"pulse_tau{tau:g}", cur)
        reporting.write_csv(self.out / "continuation_path.csv", ["tau", "T0", "iterations"],
                            [[p["tau"], p["T0"], p["iterations"]] for p in path], self.chash)

    def dichotomy(self):
        grid, sim = experiments.wave_settings(self.cfg)
        pc = self.cfg["pulse"]
        rep, _ = experiments.run_dichotomy(
            self.params, self.hom, self.eq, grid, sim, pc["dx"], pc["L"],
            experiments.continuation_settings(self.cfg), self.cfg["dichotomy"]["speed_floor"], self.cfg["name"],
        )
        self.write("dichotomy.json", rep.to_dict())
        print(f"c={rep.c:.6g} pulse_found={rep.pulse_found} verdict={rep.verdict}")

    def threshold(self):
        _, pulse = self._pulse0()
        grid, sim = experiments.wave_settings(self.cfg)
        c0 = waves.wave_speed_system(self.params, self.hom, 0.0, self.eq, grid, sim).c
        th = self.cfg["threshold"]
        tsim = waves.SimConfig(float(th["t_end"]), sim.dt, sim.stride, sim.stepper)
        rep = experiments.run_threshold(self.params, self.eq, pulse, th["lambdas"], th["L"], th["N"], tsim, c0)
        rows = [[r.lam, t, x] for r in rep.runs for t, x in zip(r.times, r.fronts)]
        reporting.write_csv(self.out / "threshold_fronts.csv", ["lambda", "t", "x_front"], rows, self.chash)
        self.write("threshold.json", rep.to_dict())
        for r in rep.runs:
            print(f"lambda={r.lam:g} {r.outcome}" + (f" speed={r.speed:.6g}" if r.speed is not None else ""))

    def suite(self):
        summary = experiments.run_full_suite(self.cfg, self.out)
        print(f"suite verdict={summary['verdict']} c0={summary['c0']:.6g}")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageFailed):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
        runner = _Runner(cfg, args.out)
        runner._tau_grid_given = args.tau_grid is not None
        getattr(runner, "continue_" if args.command == "continue" else args.command)()
    except PulselabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


def dispatch(subcommand: str, config_path, out_dir="out", extra=()) -> int:
    return main([subcommand, "--config", str(config_path), "--out", str(out_dir), *extra])


if __name__ == "__main__":
    sys.exit(main())
