"""Parabolic time stepping and traveling-wave speed measurement.

Method of lines with second-order central differences. Boundaries are either
Neumann (ghost point) or Dirichlet (node pinned at its initial value). The
explicit stepper is the default; the IMEX stepper treats diffusion
implicitly (one tridiagonal solve per species) and reaction explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded

from . import kinetics
from .errors import CflViolation, FrontLeftDomain, NoFrontDetected, NonFiniteState

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid:
    geometry: str  # "full" -> [-L, L], "half" -> [0, L]
    L: float
    N: int
    left: str = NEUMANN
    right: str = DIRICHLET

    def __post_init__(self):
        if self.geometry not in ("full", "half"):
            raise ValueError("geometry must be 'full' or 'half'")
        if self.N < 100:
            raise ValueError("N must be >= 100")
        if self.L <= 0:
            raise ValueError("L must be > 0")
        for side in (self.left, self.right):
            if side not in (NEUMANN, DIRICHLET):
                raise ValueError(f"unknown boundary type {side!r}")

    @property
    def x(self) -> np.ndarray:
        lo = -self.L if self.geometry == "full" else 0.0
        return np.linspace(lo, self.L, self.N + 1)

    @property
    def dx(self) -> float:
        span = 2 * self.L if self.geometry == "full" else self.L
        return span / self.N

    @classmethod
    def with_spacing(cls, geometry, L, dx, **kw) -> "Grid":
        span = 2 * L if geometry == "full" else L
        return cls(geometry, L, int(round(span / dx)), **kw)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.geometry, self.L, self.N * factor, self.left, self.right)


@dataclass
class Profile:
    grid: Grid
    values: np.ndarray  # (m, N+1)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.grid.N + 1:
            raise ValueError("profile length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteState("profile contains non-finite values")

    @property
    def x(self):
        return self.grid.x

    @property
    def weighted_sup(self) -> float:
        """``max_x |v(x)| sqrt(1 + x^2)`` with the sup norm over species."""
        return float(np.max(np.max(np.abs(self.values), axis=0) * np.sqrt(1.0 + self.x**2)))

    def to_csv(self, path, header_comment: str | None = None):
        cols = ["x"] + [f"v{i + 1}" for i in range(self.values.shape[0])]
        data = np.column_stack([self.x, self.values.T])
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "Profile":
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
        if not lines or not lines[0].startswith("x,"):
            raise ValueError("missing CSV header")
        data = np.atleast_2d(np.loadtxt(lines[1:], delimiter=","))
        return cls(grid, data[:, 1:].T)


@dataclass
class SimConfig:
    t_end: float
    dt: float | None = None  # default: cfl * dx^2 / (2 max D)
    stride: int = 100  # steps between snapshots
    stepper: str = "explicit"
    cfl: float = 0.9

    def __post_init__(self):
        if self.stepper not in ("explicit", "imex"):
            raise ValueError("stepper must be 'explicit' or 'imex'")
        if self.t_end <= 0 or self.stride < 1:
            raise ValueError("t_end and stride must be positive")

    def time_step(self, dx: float, Dmax: float) -> float:
        limit = 0.9 * dx * dx / (2.0 * Dmax)
        dt = self.cfl * dx * dx / (2.0 * Dmax) if self.dt is None else self.dt
        if self.stepper == "explicit" and dt > limit * (1 + 1e-12):
            raise CflViolation(f"dt={dt:.3g} exceeds explicit limit {limit:.3g}")
        return dt

    def refined(self) -> "SimConfig":
        """Config to pair with a grid refined by 2: half dt (if set), same snapshot times."""
        dt = None if self.dt is None else self.dt / 4
        return SimConfig(self.t_end, dt, self.stride * 4, self.stepper, self.cfl)


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list  # list of Profile

    def __len__(self):
        return len(self.snapshots)


def laplacian(v: np.ndarray, dx: float, left: str, right: str) -> np.ndarray:
    """Second-order Laplacian along the last axis; Dirichlet nodes get 0."""
    lap = np.empty_like(v)
    lap[..., 1:-1] = (v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]) / (dx * dx)
    lap[..., 0] = 2.0 * (v[..., 1] - v[..., 0]) / (dx * dx) if left == NEUMANN else 0.0
    lap[..., -1] = 2.0 * (v[..., -2] - v[..., -1]) / (dx * dx) if right == NEUMANN else 0.0
    return lap


def _imex_bands(D: float, dt: float, dx: float, n: int, left: str, right: str) -> np.ndarray:
    r = D * dt / (dx * dx)
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[2, :-1] = -r
    if left == NEUMANN:
        ab[0, 1] = -2.0 * r
    else:
        ab[1, 0], ab[0, 1] = 1.0, 0.0
    if right == NEUMANN:
        ab[2, -2] = -2.0 * r
    else:
        ab[1, -1], ab[2, -2] = 1.0, 0.0
    return ab


def march(reaction: Callable, D: np.ndarray, v0: np.ndarray, grid: Grid, config: SimConfig):
    """Generator over ``(t, v)`` every ``config.stride`` steps, starting at t = 0.

    ``reaction`` maps an ``(m, N+1)`` state to rates of the same shape.
    Dirichlet nodes keep their initial values.
    """
    D = np.asarray(D, dtype=float).reshape(-1, 1)
    dx = grid.dx
    dt = config.time_step(dx, float(D.max()))
    n_steps = int(np.ceil(config.t_end / dt - 1e-9))
    v = np.array(v0, dtype=float, copy=True)
    pinned_left = v[:, 0].copy()
    pinned_right = v[:, -1].copy()
    bands = None
    if config.stepper == "imex":
        bands = [_imex_bands(float(d), dt, dx, v.shape[1], grid.left, grid.right) for d in D[:, 0]]
    yield 0.0, v
    for k in range(1, n_steps + 1):
        rates = reaction(v)
        if bands is None:
            v = v + dt * (D * laplacian(v, dx, grid.left, grid.right) + rates)
        else:
            rhs = v + dt * rates
            if grid.left == DIRICHLET:
                rhs[:, 0] = pinned_left
            if grid.right == DIRICHLET:
                rhs[:, -1] = pinned_right
            v = np.array([solve_banded((1, 1), ab, r) for ab, r in zip(bands, rhs)])
        if grid.left == DIRICHLET:
            v[:, 0] = pinned_left
        if grid.right == DIRICHLET:
            v[:, -1] = pinned_right
        if k % config.stride == 0 or k == n_steps:
            if not np.all(np.isfinite(v)):
                raise NonFiniteState(f"non-finite state at t={k * dt:.6g}")
            yield k * dt, v


def simulate(params, hom, tau, initial: Profile, config: SimConfig) -> Trajectory:
    reaction = lambda v: kinetics.eval_F_tau(params, hom, tau, v)  # noqa: E731
    times, snaps = [], []
    for t, v in march(reaction, params.D, initial.values, initial.grid, config):
        times.append(t)
        snaps.append(Profile(initial.grid, v.copy()))
    return Trajectory(np.array(times), snaps)


# ---------------------------------------------------------------------------
# Front tracking


def front_position(x: np.ndarray, u: np.ndarray, level: float) -> float | None:
    """Rightmost downward crossing of ``level`` by linear interpolation."""
    above = u >= level
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if idx.size == 0:
        return None
    i = idx[-1]
    return float(x[i] + (u[i] - level) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]))


def fit_speed(times, positions, fraction: float = 0.5):
    """Least-squares slope over the trailing ``fraction`` of the window."""
    times = np.asarray(times)
    positions = np.asarray(positions)
    start = times[0] + (1.0 - fraction) * (times[-1] - times[0])
    sel = times >= start
    t, xs = times[sel], positions[sel]
    if t.size < 3:
        raise NoFrontDetected("too few front positions for a speed fit")
    A = np.column_stack([t, np.ones_like(t)])
    coef, res, *_ = np.linalg.lstsq(A, xs, rcond=None)
    resid = xs - A @ coef
    dof = max(t.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(np.sqrt(cov[0, 0])), (float(t[0]), float(t[-1])), int(t.size)


@dataclass
class WaveResult:
    c: float
    stderr: float
    times: np.ndarray
    front_positions: np.ndarray
    final: Profile
    window: tuple
    n_points: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"c": self.c, "stderr": self.stderr, "n_points": self.n_points, "window": list(self.window), **self.meta}


def track_front(reaction, D, initial: Profile, config: SimConfig, component: int, level: float,
                margin_cells: int = 10, abort_on_boundary: bool = True, boundary_tol: float = 0.02):
    """March and record the front of ``component`` at ``level``.

    Returns ``(times, positions, final_state)``; positions are ``nan`` when no
    crossing exists at a snapshot.

    The run aborts once the level set comes within ``margin_cells`` of an
    edge, or once a pinned (Dirichlet) edge value is disturbed by more than
    ``boundary_tol`` times the level over the same band. The second test
    catches fronts that stall in the boundary layer before reaching the edge.
    """
    grid = initial.grid
    x = grid.x
    k = margin_cells
    lo, hi = x[0] + k * grid.dx, x[-1] - k * grid.dx
    pinned = [(sl, initial.values[component, edge]) for sl, edge, bc in
              ((slice(0, k + 1), 0, grid.left), (slice(-k - 1, None), -1, grid.right)) if bc == DIRICHLET]
    band_tol = boundary_tol * abs(level)
    times, pos = [], []
    v = initial.values
    for t, v in march(reaction, D, initial.values, grid, config):
        p = front_position(x, v[component], level)
        if abort_on_boundary:
            hit = p is not None and not lo <= p <= hi
            hit = hit or any(np.max(np.abs(v[component, sl] - b)) > band_tol for sl, b in pinned)
            if hit:
                where = "" if p is None else f"front at x={p:.4g} "
                raise FrontLeftDomain(f"{where}reached the boundary at t={t:.4g}; enlarge L")
        times.append(t)
        pos.append(np.nan if p is None else p)
    return np.array(times), np.array(pos), v.copy()


def _speed_from_track(times, pos, final, grid, meta) -> WaveResult:
    ok = np.isfinite(pos)
    if ok.sum() < 3 or not ok[len(ok) // 2:].all():
        raise NoFrontDetected("front level not crossed over the fit window")
    c, err, window, n = fit_speed(times[ok], pos[ok])
    return WaveResult(c, err, times, pos, Profile(grid, final), window, n, meta)


def tanh_front(grid: Grid, upper: np.ndarray, lower: np.ndarray | None = None,
               center: float = 0.0, width: float | None = None) -> Profile:
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    lower = np.zeros_like(upper) if lower is None else np.atleast_1d(lower)
    width = 20.0 * grid.dx if width is None else width
    s = 0.5 * (1.0 - np.tanh((grid.x - center) / width))
    return Profile(grid, lower[:, None] + (upper - lower)[:, None] * s[None, :])


def wave_grid(L: float, dx: float) -> Grid:
    return Grid.with_spacing("full", L, dx, left=DIRICHLET, right=DIRICHLET)


def wave_speed_system(params, hom, tau, eq, grid: Grid, config: SimConfig, center: float = 0.0) -> WaveResult:
    """Speed of the front connecting ``w_minus`` (left) to 0 (right) for ``F^tau``.

    Level set ``T = T_minus / 2``; speed is the slope over the last half of
    the run.
    """
    if grid.left != DIRICHLET or grid.right != DIRICHLET:
        grid = Grid(grid.geometry, grid.L, grid.N, DIRICHLET, DIRICHLET)
    initial = tanh_front(grid, eq.w_minus, center=center)
    reaction = lambda v: kinetics.eval_F_tau(params, hom, tau, v)  # noqa: E731
    level = 0.5 * eq.T_minus
    times, pos, final = track_front(reaction, params.D, initial, config, 7, level)
    return _speed_from_track(times, pos, final, grid, {"tau": float(tau), "level": level})


def wave_speed_scalar(f: Callable, D: float, grid: Grid, config: SimConfig, upper: float,
                      center: float = 0.0) -> WaveResult:
    """Front speed of ``u_t = D u_xx + f(u)`` connecting ``upper`` to 0."""
    if grid.left != DIRICHLET or grid.right != DIRICHLET:
        grid = Grid(grid.geometry, grid.L, grid.N, DIRICHLET, DIRICHLET)
    initial = tanh_front(grid, [upper], center=center)
    reaction = lambda v: f(v)  # noqa: E731
    times, pos, final = track_front(reaction, [D], initial, config, 0, 0.5 * upper)
    return _speed_from_track(times, pos, final, grid, {"level": 0.5 * upper})


def speed_sign_scalar_criterion(P: Callable, T_minus: float, rtol: float = 1e-10) -> int:
    """Sign of ``int_0^{T_minus} P``; 0 when within ``rtol * T_minus * max|P|``."""
    if T_minus <= 0:
        raise ValueError("T_minus must be positive")
    scale = float(np.max(np.abs(P(np.linspace(0.0, T_minus, 1001)))))
    value = _integral(P, T_minus, scale)
    if abs(value) <= rtol * T_minus * scale:
        return 0
    return 1 if value > 0 else -1


def _integral(P, T_minus, scale):
    # absolute floor keeps quad from chasing relative accuracy on a vanishing integral
    return float(quad(P, 0.0, T_minus, epsabs=1e-14 * T_minus * scale, epsrel=1e-12, limit=200)[0])


def scalar_integral(P: Callable, T_minus: float) -> float:
    return _integral(P, T_minus, float(np.max(np.abs(P(np.linspace(0.0, T_minus, 1001))))))
