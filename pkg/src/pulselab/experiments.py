"""Experiments built on the solvers: the speed/pulse dichotomy, threshold runs and the full pipeline."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import equilibria, homotopy, kinetics, pulses, reporting, waves
from .errors import (
    Inconclusive,
    MonitorViolated,
    NewtonDiverged,
    PulselabError,
    ScalarPulseMissing,
    StageFailed,
    Unclassified,
)

EXTINCTION_FRACTION = 0.01


def max_workers(n_tasks: int) -> int:
    cap = os.environ.get("PULSELAB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def sweep_map(fn, items):
    """Order-preserving map over independent tasks, capped by ``PULSELAB_THREADS``."""
    items = list(items)
    workers = max_workers(len(items))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Settings derived from a run config


def wave_settings(cfg):
    g = cfg["grid"]
    s = cfg["sim"]
    grid = waves.Grid("full", float(g["L"]), int(g["N"]), waves.DIRICHLET, waves.DIRICHLET)
    sim = waves.SimConfig(float(s["t_end"]), s["dt"], int(s["stride"]), s["stepper"])
    return grid, sim


def continuation_settings(cfg) -> pulses.ContinuationConfig:
    return pulses.ContinuationConfig(**cfg["continuation"])


def build_homotopy(params, eq, cfg):
    """Homotopy from the config: explicit bump if given, otherwise constructed."""
    h = cfg["homotopy"]
    if h["g"] is not None:
        spec = homotopy.GSpec(float(h["g"]["m"]), float(h["g"]["r"]), float(h["g"]["A"]), float(h["tau1"]))
        spec.check_support(eq.T_bar, eq.T_minus)
        G = homotopy.GFunction(spec, params.h8, eq.T_minus)
        ok, reason = homotopy.analyse_G(G)
        if not ok:
            from .errors import GConstructionFailed

            raise GConstructionFailed(f"configured bump fails the G conditions: {reason}")
    else:
        spec, G = homotopy.build_g(params, eq, float(h["tau1"]), margin=float(h["margin"]))
    return homotopy.homotopy_from_g(spec), G


# ---------------------------------------------------------------------------
# Dichotomy


@dataclass
class DichotomyReport:
    params_id: str
    c: float
    stderr: float
    integral_sign: int
    pulse_found: bool
    pulse_failure: str | None
    verdict: str
    residual_sup: float | None = None
    failed_at_tau: float | None = None

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"

    def to_dict(self):
        return dict(self.__dict__)


def attempt_pulse(params, hom, eq, dx=0.01, L=None, cont=None):
    """Build the tau = 1 pulse and continue it to tau = 0.

    Returns ``(pulse_or_None, failure_message, failed_tau)``.
    """
    try:
        start = pulses.system_pulse_tau1(params, hom, dx=dx, L=L, upper=eq.T_minus)
        end = pulses.continue_pulse(params, hom, start, eq.w_minus, cont)
    except (NewtonDiverged, MonitorViolated) as exc:
        return None, str(exc), float(exc.tau)
    except ScalarPulseMissing as exc:
        return None, str(exc), 1.0
    cert = pulses.verify_pulse(params, hom, 0.0, end.grid, end.values, eq.w_minus)
    if not cert.passed:
        return None, f"certificate failed: {cert.to_dict()}", 0.0
    return end, None, None


def run_dichotomy(params, hom, eq, grid, sim, pulse_dx=0.01, pulse_L=None, cont=None, speed_floor=0.02,
                  params_id="params", wave=None, attempt=None):
    """Compare the sign of ``c^0`` with the outcome of the pulse continuation.

    ``wave`` and ``attempt`` accept precomputed results (as returned by
    :func:`waves.wave_speed_system` and :func:`attempt_pulse`). Returns the
    report and the ``tau = 0`` pulse (or ``None``).
    """
    wave = wave or waves.wave_speed_system(params, hom, 0.0, eq, grid, sim)
    if abs(wave.c) < max(3.0 * wave.stderr, speed_floor):
        raise Inconclusive(f"|c| = {abs(wave.c):.3g} within noise floor {max(3 * wave.stderr, speed_floor):.3g}")
    sign = waves.speed_sign_scalar_criterion(lambda T: kinetics.P(params, T), eq.T_minus)
    pulse, failure, tau_fail = attempt or attempt_pulse(params, hom, eq, pulse_dx, pulse_L, cont)
    found = pulse is not None
    ok = (wave.c > 0 and found) or (wave.c <= 0 and not found)
    return (
        DichotomyReport(
            params_id=params_id,
            c=wave.c,
            stderr=wave.stderr,
            integral_sign=sign,
            pulse_found=found,
            pulse_failure=failure,
            verdict="consistent" if ok else "inconsistent",
            residual_sup=pulse.residual_sup if found else None,
            failed_at_tau=tau_fail,
        ),
        pulse,
    )


# ---------------------------------------------------------------------------
# Threshold


def even_extension(pulse, grid: waves.Grid, lam: float = 1.0) -> waves.Profile:
    """``lam`` times the pulse evaluated at ``|x|`` on a full-line grid (zero beyond its domain)."""
    xs = pulse.grid.x
    ax = np.abs(grid.x)
    vals = np.array([np.interp(ax, xs, v, right=0.0) for v in pulse.values])
    return waves.Profile(grid, lam * vals)


@dataclass
class ThresholdRun:
    lam: float
    outcome: str  # "propagation" | "extinction"
    speed: float | None
    stderr: float | None
    t_stop: float
    times: np.ndarray = field(repr=False)
    fronts: np.ndarray = field(repr=False)
    supT: np.ndarray = field(repr=False)

    def to_dict(self):
        return {"lambda": self.lam, "outcome": self.outcome, "speed": self.speed, "stderr": self.stderr, "t_stop": self.t_stop}


@dataclass
class ThresholdReport:
    runs: list
    c0: float | None
    extinction_floor: float
    level: float

    @property
    def lambdas(self):
        return [r.lam for r in self.runs]

    @property
    def outcomes(self):
        return [r.outcome for r in self.runs]

    @property
    def monotone(self) -> bool:
        order = sorted(self.runs, key=lambda r: r.lam)
        seen = False
        for r in order:
            if r.outcome == "propagation":
                seen = True
            elif seen:
                return False
        return True

    def speed_agreement(self, lam):
        run = next(r for r in self.runs if r.lam == lam)
        if run.speed is None or not self.c0:
            return None
        return abs(run.speed - self.c0) / abs(self.c0)

    def to_dict(self):
        return {
            "runs": [r.to_dict() for r in self.runs],
            "c0": self.c0,
            "monotone_in_lambda": self.monotone,
            "extinction_floor": self.extinction_floor,
            "front_level": self.level,
            "criteria": "extinction: sup T below floor; propagation: front at level advances over the last half window",
        }


def classify_run(params, eq, initial: waves.Profile, sim: waves.SimConfig, lam: float) -> ThresholdRun:
    floor = EXTINCTION_FRACTION * eq.T_bar
    level = 0.5 * eq.T_minus
    grid = initial.grid
    x = grid.x
    edge = x[-1] - 10 * grid.dx
    reaction = lambda v: kinetics.eval_F(params, v)  # noqa: E731
    times, fronts, sups = [], [], []
    t = 0.0
    outcome = None
    for t, v in waves.march(reaction, params.D, initial.values, grid, sim):
        sup = float(np.max(v[7]))
        pos = waves.front_position(x, v[7], level)
        times.append(t)
        sups.append(sup)
        fronts.append(np.nan if pos is None else pos)
        if sup < floor:
            outcome = "extinction"
            break
        if pos is not None and pos > edge:
            break
    times, fronts, sups = np.array(times), np.array(fronts), np.array(sups)
    speed = err = None
    if outcome is None:
        ok = np.isfinite(fronts)
        if ok.sum() >= 6:
            tt, ff = times[ok], fronts[ok]
            half = tt >= tt[0] + 0.5 * (tt[-1] - tt[0])
            if np.all(np.diff(ff[half]) > 0) and half.sum() >= 3:
                outcome = "propagation"
                speed, err, *_ = waves.fit_speed(tt, ff)
    if outcome is None:
        raise Unclassified(lam, float(t))
    return ThresholdRun(float(lam), outcome, speed, err, float(t), times, fronts, sups)


def run_threshold(params, eq, pulse, lambdas, L=80.0, N=1600, sim: waves.SimConfig | None = None,
                  c0: float | None = None) -> ThresholdReport:
    """Launch ``lam * (even extension of the pulse)`` with Neumann ends and classify each run."""
    grid = waves.Grid("full", float(L), int(N), waves.NEUMANN, waves.NEUMANN)
    sim = sim or waves.SimConfig(t_end=40.0, stride=50)

    def one(lam):
        return classify_run(params, eq, even_extension(pulse, grid, lam), sim, lam)

    runs = sweep_map(one, [float(l) for l in lambdas])
    return ThresholdReport(runs, c0, EXTINCTION_FRACTION * eq.T_bar, 0.5 * eq.T_minus)


# ---------------------------------------------------------------------------
# Full pipeline


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PulselabError as exc:
        raise StageFailed(name, exc) from exc


def monotone_sweep(params, hom, eq, tau_grid, n, seed):
    rng = np.random.default_rng(seed)
    bound = (2.0 * eq.w_minus[0], 2.0 * eq.w_minus[1])
    out = []
    for tau in tau_grid:
        samples = kinetics.sample_region_C(params, n, rng, bound)
        rep = kinetics.check_monotone(params, hom, tau, samples)
        out.append({"tau": float(tau), "n_samples": rep.n_samples, "violations": len(rep.violations)})
    return out


def run_full_suite(cfg, out_dir, seed: int | None = None) -> dict:
    """Run every stage in order and write their reports to ``out_dir``.

    The first hard failure is raised as ``StageFailed`` tagged with the stage.
    A negative measured speed is an outcome, not a failure: the speed sweep
    and the threshold stage are then skipped.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash
    params = cfg.params
    seed = cfg["seed"] if seed is None else seed
    tau_grid = cfg["tau_grid"]
    summary = {"name": cfg["name"], "stages": {}}

    def record(stage, filename, payload):
        reporting.write_json(out / filename, payload, chash)
        summary["stages"][stage] = filename

    eq = _stage("equilibria", equilibria.find_equilibria, params)
    record("equilibria", "equilibria.json", eq.to_dict())

    hom, G = _stage("g_construction", build_homotopy, params, eq, cfg)
    record("g_construction", "g.json", {"g": hom.g.to_dict(), "G": G.to_dict()})

    stab = _stage("stability", equilibria.classify_stability, params, hom, eq, tau_grid)
    mono = _stage("stability", monotone_sweep, params, hom, eq, tau_grid, int(cfg["samples"]["n"]), seed)
    record("stability", "stability.json", {**stab.to_dict(), "monotone": mono})

    q = {}
    for tau in tau_grid:
        try:
            q[str(tau)] = [float(v) for v in homotopy.construct_q(params, hom, tau)]
        except PulselabError as exc:
            q[str(tau)] = str(exc)
    psi, psi_rep = _stage("upper_solution", homotopy.find_upper_solution, params, hom, eq, tau_grid)
    record("constructions", "constructions.json", {"q": q, "upper_solution": psi_rep.to_dict()})

    grid, sim = wave_settings(cfg)
    wave0 = _stage("speed_sweep", waves.wave_speed_system, params, hom, 0.0, eq, grid, sim)
    reporting.write_csv(out / "front_tau0.csv", ["t", "x_front"], np.column_stack([wave0.times, wave0.front_positions]), chash)
    if wave0.c > 0:
        sweep = _stage(
            "speed_sweep", homotopy.verify_speed_preservation, params, hom, eq, tau_grid, grid, sim, G,
            speed_fn=lambda tau: wave0 if tau == 0.0 else waves.wave_speed_system(params, hom, tau, eq, grid, sim),
        )
        record("speed_sweep", "speeds.json", sweep.to_dict())
    else:
        record("speed_sweep", "speeds.json", {"c0": wave0.c, "skipped": "c0 <= 0"})

    pc = cfg["pulse"]
    start = _stage("pulse_tau1", pulses.system_pulse_tau1, params, hom, dx=pc["dx"], L=pc["L"], upper=eq.T_minus)
    reporting.write_profile(out / "pulse_tau1.csv", start.grid.x, start.values, chash)
    spectrum = _stage("pulse_tau1", pulses.linearized_spectrum_check, params, hom, start)
    cert1 = pulses.verify_pulse(params, hom, 1.0, start.grid, start.values, eq.w_minus)
    record("pulse_tau1", "pulse_tau1.json", {**start.certificate(), "verification": cert1.to_dict(), "spectrum": spectrum.to_dict()})

    cont = continuation_settings(cfg)
    try:
        end = pulses.continue_pulse(params, hom, start, eq.w_minus, cont)
        cert0 = pulses.verify_pulse(params, hom, 0.0, end.grid, end.values, eq.w_minus)
        attempt = (end, None, None) if cert0.passed else (None, "certificate failed", 0.0)
        reporting.write_profile(out / "pulse_tau0.csv", end.grid.x, end.values, chash)
        reporting.write_csv(out / "continuation_path.csv", ["tau", "T0", "iterations"],
                            [[p["tau"], p["T0"], p["iterations"]] for p in end.path], chash)
        record("continuation", "pulse_tau0.json", {**end.certificate(), "verification": cert0.to_dict()})
    except (NewtonDiverged, MonitorViolated) as exc:
        attempt = (None, str(exc), float(exc.tau))
        record("continuation", "continuation.json", {"failed": str(exc), "tau": exc.tau})

    report, pulse0 = _stage(
        "dichotomy", run_dichotomy, params, hom, eq, grid, sim,
        speed_floor=cfg["dichotomy"]["speed_floor"], params_id=cfg["name"], wave=wave0, attempt=attempt,
    )
    record("dichotomy", "dichotomy.json", report.to_dict())

    if pulse0 is not None:
        th = cfg["threshold"]
        tsim = waves.SimConfig(float(th["t_end"]), sim.dt, sim.stride, sim.stepper)
        trep = _stage("threshold", run_threshold, params, eq, pulse0, th["lambdas"], th["L"], th["N"], tsim, wave0.c)
        record("threshold", "threshold.json", trep.to_dict())
        rows = [[r.lam, t, x] for r in trep.runs for t, x in zip(r.times, r.fronts)]
        reporting.write_csv(out / "threshold_fronts.csv", ["lambda", "t", "x_front"], rows, chash)
    else:
        summary["stages"]["threshold"] = "skipped: no pulse"

    summary["verdict"] = report.verdict
    summary["c0"] = wave0.c
    summary["pulse_found"] = report.pulse_found
    reporting.write_json(out / "summary.json", summary, chash)
    return summary
