"""Stationary pulses on the half-line.

Scalar pulses come from the first integral of ``D w'' + f(w) = 0``; the
decoupled system at ``tau = 1`` is assembled from a scalar thrombin pulse and
seven linear two-point problems; other ``tau`` are reached by Newton
continuation. All discretizations use the same second-order stencil with a
ghost point at ``x = 0`` (Neumann) and ``w = 0`` at ``x = L``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import bisect
from scipy.sparse.linalg import eigs, splu

from . import kinetics
from .errors import (
    CertificateFailed,
    LinearSolveFailure,
    MonitorViolated,
    NearZeroEigenvalue,
    NewtonDiverged,
    NoPulse,
    QuadratureFailure,
    ScalarPulseMissing,
)
from .waves import DIRICHLET, NEUMANN, Grid, Profile

MONO_TOL = 1e-10


def half_line_grid(L: float, dx: float) -> Grid:
    return Grid.with_spacing("half", L, dx, left=NEUMANN, right=DIRICHLET)


def default_length(params) -> float:
    return 40.0 * float(np.max(np.sqrt(params.D / np.array([getattr(params, f"h{i}") for i in range(1, 9)]))))


# ---------------------------------------------------------------------------
# Scalar pulse


def _quad(f, a, b):
    val, err = quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=400)
    if not np.isfinite(val):
        raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
    return val


def bistable_zeros(f: Callable, upper: float, n: int = 4000) -> float:
    """Middle zero of ``f`` on ``(0, upper)``, where ``f`` goes from - to +."""
    w = np.linspace(0.0, upper, n + 1)[1:-1]
    fv = np.array([f(x) for x in w])
    idx = np.nonzero((fv[:-1] < 0) & (fv[1:] >= 0))[0]
    if idx.size != 1 or fv[0] >= 0 or fv[-1] <= 0:
        raise ScalarPulseMissing("nonlinearity does not have the bistable sign pattern on (0, upper)")
    return float(bisect(f, w[idx[0]], w[idx[0] + 1], xtol=1e-15))


@dataclass
class ScalarPulse:
    w0: float
    theta: float
    upper: float
    grid: Grid
    values: np.ndarray
    slope: np.ndarray
    f: Callable = field(repr=False)
    D: float = 1.0

    def first_integral_residual(self, stride: int = 1) -> float:
        """``max |D p^2 / 2 - int_w^{w0} f|`` with the integral computed by quadrature."""
        err = 0.0
        for w, p in zip(self.values[::stride], self.slope[::stride]):
            rhs = _quad(self.f, w, self.w0)
            err = max(err, abs(0.5 * self.D * p * p - rhs))
        return err


def scalar_pulse(f: Callable, D: float, upper: float, L: float | None = None, dx: float = 0.01,
                 switch: float = 1e-3) -> ScalarPulse:
    """Even pulse of ``D w'' + f(w) = 0`` on ``[0, L]`` with ``w'(0) = 0``.

    ``w0`` solves ``int_0^{w0} f = 0`` by bisection. The profile integrates
    the first-order system ``w' = p, p' = -f(w)/D`` from ``(w0, 0)`` until
    ``w = switch * w0`` and continues with the linearized exponential tail.
    """
    theta = bistable_zeros(f, upper)
    total = _quad(f, 0.0, upper)
    scale = upper * max(abs(f(w)) for w in np.linspace(0.0, upper, 201))
    if total <= 1e-12 * scale:
        raise NoPulse(f"int_0^upper f = {total:.6g} <= 0; no pulse for non-positive scalar speed")
    cumulative = lambda w: _quad(f, 0.0, w)  # noqa: E731
    w0 = bisect(cumulative, theta, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    df0 = (f(1e-7 * upper) - f(-1e-7 * upper)) / (2e-7 * upper)
    if df0 >= 0:
        raise ScalarPulseMissing("zero state is not stable for the scalar nonlinearity")
    k = np.sqrt(-df0 / D)
    L = 40.0 / k if L is None else L
    grid = half_line_grid(L, dx)
    x = grid.x

    def rhs(_, y):
        return [y[1], -f(y[0]) / D]

    hit = lambda _, y: y[0] - switch * w0  # noqa: E731
    hit.terminal, hit.direction = True, -1
    sol = solve_ivp(rhs, (0.0, L), [w0, 0.0], method="DOP853", rtol=1e-13, atol=1e-16,
                    dense_output=True, events=hit)
    if not sol.success or sol.t_events[0].size == 0:
        raise QuadratureFailure("pulse trajectory did not reach the tail region")
    xc = float(sol.t_events[0][0])
    w = np.empty_like(x)
    p = np.empty_like(x)
    inner = x <= xc
    yi = sol.sol(x[inner])
    w[inner], p[inner] = yi[0], yi[1]
    wc = switch * w0
    w[~inner] = wc * np.exp(-k * (x[~inner] - xc))
    p[~inner] = -k * w[~inner]
    w[-1] = 0.0
    return ScalarPulse(float(w0), theta, float(upper), grid, w, p, f, float(D))


# ---------------------------------------------------------------------------
# Discrete operators


def discrete_laplacian(values: np.ndarray, dx: float) -> np.ndarray:
    """Second-order Laplacian on nodes ``0..N-1`` (ghost at 0, ``w_N`` as given)."""
    v = np.atleast_2d(values)
    lap = np.empty((v.shape[0], v.shape[1] - 1))
    lap[:, 0] = 2.0 * (v[:, 1] - v[:, 0])
    lap[:, 1:] = v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]
    return lap / (dx * dx)


def fourth_order_laplacian(values: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order Laplacian on nodes ``0..N-1`` using even reflection at 0 and odd at L."""
    v = np.atleast_2d(values)
    ext = np.concatenate([v[:, 2:0:-1], v, -v[:, -2:-4:-1]], axis=1)
    c = ext[:, 2:-2]
    lap = (-ext[:, 4:] + 16 * ext[:, 3:-1] - 30 * c + 16 * ext[:, 1:-3] - ext[:, :-4]) / (12 * dx * dx)
    return lap[:, :-1]


def discrete_residual(params, hom, tau, grid: Grid, values: np.ndarray) -> np.ndarray:
    D = params.D[:, None]
    return D * discrete_laplacian(values, grid.dx) + kinetics.eval_F_tau(params, hom, tau, values[:, :-1])


def _tridiag_solve(D: float, a: np.ndarray, b: np.ndarray, dx: float) -> np.ndarray:
    """Solve ``D w'' - a w = -b`` on nodes ``0..N-1`` with ``w'(0) = 0`` and ``w_N = 0``."""
    n = a.size
    r = D / (dx * dx)
    ab = np.zeros((3, n))
    ab[0, 1:] = r
    ab[0, 1] = 2.0 * r
    ab[1] = -2.0 * r - a
    ab[2, :-1] = r
    try:
        w = solve_banded((1, 1), ab, -b)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise LinearSolveFailure("non-finite solution of a cascade problem")
    return w


def polish_scalar(f: Callable, df: Callable, D: float, grid: Grid, w: np.ndarray, tol: float = 1e-11,
                  max_iter: int = 30) -> np.ndarray:
    """Newton on the discrete scalar problem starting from ``w``."""
    dx = grid.dx
    u = w[:-1].copy()
    r0 = D / (dx * dx)
    for _ in range(max_iter):
        full = np.append(u, 0.0)
        res = D * discrete_laplacian(full, dx)[0] + f(u)
        if np.max(np.abs(res)) < tol:
            break
        ab = np.zeros((3, u.size))
        ab[0, 1:] = r0
        ab[0, 1] = 2.0 * r0
        ab[1] = -2.0 * r0 + df(u)
        ab[2, :-1] = r0
        step = solve_banded((1, 1), ab, res)
        u = u - step
        if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(u))):
            break
    else:
        raise LinearSolveFailure("discrete scalar pulse did not converge")
    return np.append(u, 0.0)


# ---------------------------------------------------------------------------
# Pulse results


@dataclass
class PulseResult:
    tau: float
    grid: Grid
    values: np.ndarray  # (8, N+1)
    residual_sup: float
    monotone: bool
    path: list = field(default_factory=list)  # continuation log

    @property
    def amplitude(self) -> np.ndarray:
        return self.values[:, 0].copy()

    @property
    def profile(self) -> Profile:
        return Profile(self.grid, self.values)

    @property
    def weighted_sup(self) -> float:
        return self.profile.weighted_sup

    def certificate(self) -> dict:
        return {
            "tau": self.tau,
            "residual_sup": self.residual_sup,
            "monotone": self.monotone,
            "amplitude": [float(a) for a in self.amplitude],
            "weighted_sup": self.weighted_sup,
            "L": self.grid.L,
            "dx": self.grid.dx,
        }

    def save(self, csv_path, json_path, header: str | None = None, extra: dict | None = None):
        self.profile.to_csv(csv_path, header)
        with open(json_path, "w") as fh:
            json.dump({**self.certificate(), **(extra or {})}, fh, indent=2)


def is_monotone(values: np.ndarray, tol: float = MONO_TOL) -> bool:
    return bool(np.all(np.diff(values, axis=-1) <= tol))


def _make_result(params, hom, tau, grid, values, path=None) -> PulseResult:
    res = discrete_residual(params, hom, tau, grid, values)
    return PulseResult(float(tau), grid, values, float(np.max(np.abs(res))), is_monotone(values), path or [])


def thrombin_nonlinearity(params, hom):
    """``F_8`` at ``tau = 1`` as a function of T alone, with its derivative."""
    _, _, gamma = hom.coefficients(1.0)
    f = lambda T: kinetics.P(params, T) + gamma * hom.g(T)  # noqa: E731
    df = lambda T: kinetics.dP(params, T) + gamma * hom.g.derivative(T)  # noqa: E731
    return f, df


def _cascade(params, T: np.ndarray, dx: float) -> np.ndarray:
    p = params
    N1 = T.size
    w = np.zeros((8, N1))
    w[7] = T
    Ti = T[:-1]

    def solve(i, a, b):
        w[i - 1, :-1] = _tridiag_solve(p.D[i - 1], a, b, dx)

    for i in (3, 4, 7):
        k, rho, h = getattr(p, f"k{i}"), getattr(p, f"rho{i}"), getattr(p, f"h{i}")
        solve(i, k * Ti + h, k * rho * Ti)
    v7 = w[6, :-1]
    solve(5, p.k5 * v7 + p.h5, p.k5 * p.rho5 * v7)
    solve(2, np.full(N1 - 1, p.h2), p.k2 * w[3, :-1] * w[4, :-1])
    act = p.k6 * w[4, :-1] + p.kbar6 * w[1, :-1]
    solve(6, act + p.h6, act * p.rho6)
    solve(1, np.full(N1 - 1, p.h1), p.k1 * w[2, :-1] * w[5, :-1])
    return w


def system_pulse_tau1(params, hom, dx: float = 0.01, L: float | None = None, upper: float | None = None,
                      max_doublings: int = 4, amp_rtol: float = 1e-6) -> PulseResult:
    """Pulse of the decoupled ``tau = 1`` system.

    Without an explicit ``L`` the domain is doubled from
    ``40 max sqrt(D_i/h_i)`` until ``w(0)`` moves by less than ``amp_rtol``.
    """
    f, df = thrombin_nonlinearity(params, hom)
    if upper is None:
        from .equilibria import find_equilibria

        upper = find_equilibria(params).T_minus

    def build(length):
        try:
            sc = scalar_pulse(f, params.D8, upper, L=length, dx=dx)
        except NoPulse as exc:
            raise ScalarPulseMissing(str(exc)) from exc
        grid = sc.grid
        T = polish_scalar(f, df, params.D8, grid, sc.values)
        return _make_result(params, hom, 1.0, grid, _cascade(params, T, grid.dx))

    if L is not None:
        result = build(L)
    else:
        length = default_length(params)
        result = build(length)
        for _ in range(max_doublings):
            bigger = build(2 * length)
            drift = np.max(np.abs(bigger.amplitude - result.amplitude) / np.abs(result.amplitude))
            result, length = bigger, 2 * length
            if drift < amp_rtol:
                break
    vals = result.values
    if not (np.all(vals[:, :-1] > 0) and result.monotone):
        raise CertificateFailed("tau=1 pulse is not positive and monotone")
    return result


# ---------------------------------------------------------------------------
# Newton continuation


@dataclass
class ContinuationConfig:
    dtau0: float = 0.05
    dtau_max: float = 0.1
    dtau_min: float = 1e-4
    grow: float = 1.5
    newton_tol: float = 1e-10
    max_iter: int = 25
    max_halvings: int = 8
    eta_fraction: float = 0.1  # amplitude floor relative to the tau = 1 pulse
    weighted_bound_factor: float = 10.0
    positivity_tol: float = 1e-12
    target: float = 0.0


class _System:
    """Discrete ``D w'' + F^tau(w)`` in point-major ordering ``u[8 j + i]``."""

    def __init__(self, params, hom, grid: Grid):
        self.params, self.hom, self.grid = params, hom, grid
        self.n = grid.N  # unknown nodes 0..N-1
        dx = grid.dx
        D = params.D
        n = self.n
        rows, cols, vals = [], [], []
        j = np.arange(n)
        for i in range(8):
            c = D[i] / (dx * dx)
            rows.append(8 * j + i)
            cols.append(8 * j + i)
            vals.append(np.full(n, -2.0 * c))
            up = j[:-1]
            rows.append(8 * up + i)
            cols.append(8 * (up + 1) + i)
            vals.append(np.where(up == 0, 2.0 * c, c))
            rows.append(8 * (up + 1) + i)
            cols.append(8 * up + i)
            vals.append(np.full(n - 1, c))
        self.diffusion = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(8 * n, 8 * n)
        )
        ii, kk = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        self._block_rows = (8 * j[None, None, :] + ii[:, :, None]).ravel()
        self._block_cols = (8 * j[None, None, :] + kk[:, :, None]).ravel()

    def unpack(self, u):
        w = np.zeros((8, self.n + 1))
        w[:, :-1] = u.reshape(self.n, 8).T
        return w

    @staticmethod
    def pack(w):
        return w[:, :-1].T.ravel().copy()

    def residual(self, tau, u):
        return discrete_residual(self.params, self.hom, tau, self.grid, self.unpack(u)).T.ravel()

    def jacobian(self, tau, u):
        Jl = kinetics.jacobian(self.params, self.hom, tau, self.unpack(u)[:, :-1])  # (8, 8, n)
        local = sp.csc_matrix((Jl.ravel(), (self._block_rows, self._block_cols)), shape=self.diffusion.shape)
        return (self.diffusion + local).tocsc()


def newton_solve(system: _System, tau: float, u0: np.ndarray, cfg: ContinuationConfig):
    """Damped Newton; returns ``(u, iterations)`` or raises ``NewtonDiverged``."""
    u = u0.copy()
    r = system.residual(tau, u)
    norm = np.max(np.abs(r))
    for it in range(cfg.max_iter):
        if norm <= cfg.newton_tol:
            return u, it
        try:
            step = splu(system.jacobian(tau, u)).solve(-r)
        except RuntimeError as exc:
            raise NewtonDiverged(tau, f"singular Jacobian: {exc}") from exc
        lam = 1.0
        for _ in range(cfg.max_halvings + 1):
            trial = u + lam * step
            r_trial = system.residual(tau, trial)
            n_trial = np.max(np.abs(r_trial))
            if np.isfinite(n_trial) and n_trial < norm:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(tau, f"line search failed at residual {norm:.3e}")
        u, r, norm = trial, r_trial, n_trial
    if norm <= cfg.newton_tol:
        return u, cfg.max_iter
    raise NewtonDiverged(tau, f"no convergence after {cfg.max_iter} iterations (residual {norm:.3e})")


def check_monitors(w: np.ndarray, tau: float, w_minus: np.ndarray, eta: float, weighted_bound: float,
                   grid: Grid, cfg: ContinuationConfig) -> None:
    if not np.all(w[:, 0] > 0) or np.any(w[:, :-1] < -cfg.positivity_tol):
        raise MonitorViolated("positivity", tau)
    if not is_monotone(w):
        raise MonitorViolated("monotone", tau)
    if np.any(w[:, 0] > w_minus + MONO_TOL):
        raise MonitorViolated("box", tau, "w(0) exceeds w_minus")
    if Profile(grid, w).weighted_sup > weighted_bound:
        raise MonitorViolated("weighted_sup", tau)
    if w[7, 0] < eta:
        raise MonitorViolated("separation", tau, f"T(0) = {w[7, 0]:.3e} below floor {eta:.3e}")


def continue_pulse(params, hom, start: PulseResult, w_minus: np.ndarray,
                   cfg: ContinuationConfig | None = None) -> PulseResult:
    """Follow the pulse from ``start.tau`` down to ``cfg.target``.

    Secant predictor, damped Newton corrector, step halving on failure. A
    step whose converged solution trips a monitor is also retried with a
    smaller step; the error is raised once the step cannot shrink further.
    """
    cfg = cfg or ContinuationConfig()
    system = _System(params, hom, start.grid)
    eta = cfg.eta_fraction * start.values[7, 0]
    wbound = cfg.weighted_bound_factor * start.weighted_sup
    tau = start.tau
    u = system.pack(start.values)
    u_prev, tau_prev = None, None
    dtau = cfg.dtau0
    path = [{"tau": tau, "T0": float(start.values[7, 0]), "iterations": 0}]
    while tau > cfg.target:
        step = min(dtau, tau - cfg.target)
        new_tau = max(cfg.target, tau - step)
        guess = u if u_prev is None else u + (u - u_prev) * (step / (tau_prev - tau))
        try:
            u_new, its = newton_solve(system, new_tau, guess, cfg)
            check_monitors(system.unpack(u_new), new_tau, w_minus, eta, wbound, start.grid, cfg)
        except (NewtonDiverged, MonitorViolated):
            dtau = step / 2.0
            if dtau < cfg.dtau_min:
                raise
            continue
        u_prev, tau_prev, u, tau = u, tau, u_new, new_tau
        path.append({"tau": tau, "T0": float(u[7]), "iterations": its})
        dtau = min(cfg.dtau_max, step * cfg.grow)
    return _make_result(params, hom, tau, start.grid, system.unpack(u), path)


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class PulseCertificate:
    tau: float
    residual4: float
    residual_tol: float
    monotone: bool
    positive: bool
    tail_sup: float
    decay_tol: float
    box_margin: float  # min(w_minus - w(0)); must be >= 0

    @property
    def passed(self) -> bool:
        return (
            self.residual4 <= self.residual_tol
            and self.monotone
            and self.positive
            and self.tail_sup <= self.decay_tol
            and self.box_margin >= -MONO_TOL
        )

    def to_dict(self):
        return {**self.__dict__, "passed": self.passed}


def verify_pulse(params, hom, tau, grid: Grid, values: np.ndarray, w_minus: np.ndarray,
                 residual_tol: float | None = None, decay_tol: float = 1e-8) -> PulseCertificate:
    """Independent check with a fourth-order residual.

    The default residual tolerance ``100 dx^2`` reflects that a second-order
    discrete solution carries an ``O(dx^2)`` truncation error.
    """
    dx = grid.dx
    tol = 100.0 * dx * dx if residual_tol is None else residual_tol
    res = params.D[:, None] * fourth_order_laplacian(values, dx) + kinetics.eval_F_tau(params, hom, tau, values[:, :-1])
    tail = values[:, int(0.95 * grid.N):]
    return PulseCertificate(
        tau=float(tau),
        residual4=float(np.max(np.abs(res))),
        residual_tol=float(tol),
        monotone=is_monotone(values),
        positive=bool(np.all(values[:, 0] > 0) and np.all(values[:, :-1] >= 0)),
        tail_sup=float(np.max(np.abs(tail))),
        decay_tol=decay_tol,
        box_margin=float(np.min(w_minus - values[:, 0])),
    )


# ---------------------------------------------------------------------------
# Linearized spectrum


def _linearization(params, hom, tau, pulse: PulseResult):
    system = _System(params, hom, pulse.grid)
    return system.jacobian(tau, system.pack(pulse.values))


def _thrombin_block(f_prime: np.ndarray, D: float, dx: float, dirichlet_at_zero: bool):
    """Symmetrized tridiagonal ``D u'' + f'(T) u`` (diag, offdiag)."""
    c = D / (dx * dx)
    diag = -2.0 * c + f_prime
    off = np.full(diag.size - 1, c)
    if dirichlet_at_zero:
        return diag[1:], off[1:]
    off[0] = np.sqrt(2.0) * c
    return diag, off


@dataclass
class SpectrumReport:
    min_abs_eig: float
    min_abs_eig_refined: float
    drift: float
    positive_count: int
    leading_eig: float
    dirichlet_min_abs_eig: float
    translation_alignment: float

    def to_dict(self):
        return dict(self.__dict__)


def _smallest_magnitude(A) -> float:
    vals = eigs(A, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(np.abs(vals[0]))


def linearized_spectrum_check(params, hom, pulse: PulseResult, refined: PulseResult | None = None,
                              margin: float = 1e-6, max_drift: float = 0.1) -> SpectrumReport:
    """Eigenvalue of smallest magnitude of the linearization at a ``tau = 1`` pulse.

    ``refined`` is the same pulse on a grid with half the spacing; when not
    given it is recomputed. The positive-eigenvalue count uses the decoupled
    thrombin block (all other diagonal blocks are negative definite at
    ``tau = 1``), and the Dirichlet-at-0 variant of that block exposes the
    translation mode ``-T'``.
    """
    if refined is None:
        refined = system_pulse_tau1(params, hom, dx=pulse.grid.dx / 2, L=pulse.grid.L)
    lam = _smallest_magnitude(_linearization(params, hom, 1.0, pulse))
    lam_ref = _smallest_magnitude(_linearization(params, hom, 1.0, refined))
    drift = abs(lam - lam_ref) / lam_ref
    _, df = thrombin_nonlinearity(params, hom)
    T = pulse.values[7, :-1]
    dx = pulse.grid.dx
    d, e = _thrombin_block(df(T), params.D8, dx, False)
    ev = eigh_tridiagonal(d, e, eigvals_only=True)
    d0, e0 = _thrombin_block(df(T), params.D8, dx, True)
    ev0, vec0 = eigh_tridiagonal(d0, e0, select="i", select_range=(d0.size - 3, d0.size - 1))
    k = int(np.argmin(np.abs(ev0)))
    slope = -np.gradient(pulse.values[7], dx)[1:-1]
    v = vec0[:, k]
    align = abs(float(v @ slope)) / (np.linalg.norm(v) * np.linalg.norm(slope))
    report = SpectrumReport(
        min_abs_eig=lam,
        min_abs_eig_refined=lam_ref,
        drift=float(drift),
        positive_count=int(np.sum(ev > 0)),
        leading_eig=float(ev[-1]),
        dirichlet_min_abs_eig=float(abs(ev0[k])),
        translation_alignment=align,
    )
    if lam <= margin or drift > max_drift:
        raise NearZeroEigenvalue(f"min |lambda| = {lam:.3e}, drift under refinement {drift:.1%}")
    return report
