"""Bump function g, the scalar lower bound G, the upper solution Psi and the vector q."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from . import kinetics
from .equilibria import EquilibriumSet
from .errors import (
    ConditionZ1Violated,
    GConstructionFailed,
    InvalidGSpec,
    SpeedSignLost,
    UpperSolutionViolated,
)
from .kinetics import HomotopySetup, KineticParams

WIDTH_FACTOR = 0.4
SCAN_POINTS = 20001
TRAPEZOID_PANELS = 10_000


@dataclass(frozen=True)
class GSpec:
    """Smooth bump ``A exp(-1/(1 - s^2))`` with ``s = (T - m)/r``."""

    m: float
    r: float
    A: float
    tau1: float = 0.5

    def __post_init__(self):
        if self.r <= 0 or self.A < 0:
            raise InvalidGSpec("bump needs r > 0 and A >= 0")
        if not 0.0 < self.tau1 < 1.0:
            raise InvalidGSpec("tau1 must lie in (0, 1)")

    @property
    def support(self) -> tuple[float, float]:
        return self.m - self.r, self.m + self.r

    def check_support(self, T_bar: float, T_minus: float) -> None:
        lo, hi = self.support
        if not (T_bar < lo and hi < T_minus):
            raise InvalidGSpec(f"support [{lo:.6g}, {hi:.6g}] not strictly inside ({T_bar:.6g}, {T_minus:.6g})")

    def _s(self, T):
        return (np.asarray(T, dtype=float) - self.m) / self.r

    def __call__(self, T):
        s = self._s(T)
        sa = np.atleast_1d(s)
        out = np.zeros_like(sa)
        inside = np.abs(sa) < 1.0
        out[inside] = self.A * np.exp(-1.0 / (1.0 - sa[inside] ** 2))
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def derivative(self, T):
        s = self._s(T)
        inside = np.abs(s) < 1.0
        sc = np.where(inside, s, 0.0)
        one_m = 1.0 - sc**2
        val = np.where(inside, self.A * np.exp(-1.0 / one_m) * (-2.0 * sc / one_m**2) / self.r, 0.0)
        return val if s.ndim else float(val)

    def to_dict(self) -> dict:
        return {"m": self.m, "r": self.r, "A": self.A, "tau1": self.tau1}

    @classmethod
    def from_dict(cls, d: dict) -> "GSpec":
        unknown = set(d) - {"m", "r", "A", "tau1"}
        if unknown:
            raise InvalidGSpec(f"unknown GSpec keys {sorted(unknown)}")
        return cls(float(d["m"]), float(d["r"]), float(d["A"]), float(d.get("tau1", 0.5)))


def default_gspec_shape(eq: EquilibriumSet, A: float, tau1: float) -> GSpec:
    m = 0.5 * (eq.T_bar + eq.T_minus)
    r = WIDTH_FACTOR * (eq.T_minus - eq.T_bar)
    return GSpec(m, r, A, tau1)


@dataclass
class GFunction:
    """``G(T) = tau1 g(T) - h8 T`` on ``[0, T_minus]``."""

    g: GSpec
    h8: float
    T_minus: float
    zeros: tuple = ()
    I2: float = float("nan")

    def __call__(self, T):
        return self.g.tau1 * self.g(T) - self.h8 * np.asarray(T, dtype=float)

    def derivative(self, T):
        return self.g.tau1 * self.g.derivative(T) - self.h8

    @property
    def T1(self):
        return self.zeros[1]

    @property
    def T2(self):
        return self.zeros[2]

    def to_dict(self):
        return {"g": self.g.to_dict(), "h8": self.h8, "zeros": list(self.zeros), "I2": self.I2}


def analyse_G(G: GFunction) -> tuple[bool, str]:
    """Grid sign scan, bisection for the zeros and trapezoid for ``I2``.

    Fills ``G.zeros`` and ``G.I2`` when the sign pattern is right and returns
    ``(ok, reason)``.
    """
    T = np.linspace(0.0, G.T_minus, SCAN_POINTS)
    sg = np.sign(G(T[1:]))
    if np.any(sg == 0):
        return False, "G vanishes on a scan node"
    changes = np.nonzero(np.diff(sg))[0]
    if len(changes) != 2 or sg[0] > 0:
        return False, f"sign pattern has {len(changes)} changes"
    zs = [bisect(G, T[1 + i], T[2 + i], xtol=1e-12) for i in changes]
    G.zeros = (0.0, float(zs[0]), float(zs[1]))
    x = np.linspace(0.0, G.zeros[2], TRAPEZOID_PANELS + 1)
    G.I2 = float(np.trapezoid(G(x), x))
    if G.I2 <= 0:
        return False, f"I2 = {G.I2:.3e} <= 0"
    return True, "ok"


def build_g(params: KineticParams, eq: EquilibriumSet, tau1: float = 0.5, margin: float = 2.0,
            max_doublings: int = 60, rel_tol: float = 1e-8) -> tuple[GSpec, GFunction]:
    """Choose the bump amplitude so that G has the required shape.

    Doubling from ``h8 T_minus`` until the three conditions hold, bisection
    down to the smallest such amplitude, then ``margin`` times that amplitude
    so the scalar G-wave speed is clearly positive.
    """
    if margin < 1:
        raise ValueError("margin must be >= 1")

    def make(A):
        spec = default_gspec_shape(eq, A, tau1)
        spec.check_support(eq.T_bar, eq.T_minus)
        G = GFunction(spec, params.h8, eq.T_minus)
        return G, analyse_G(G)[0]

    hi = params.h8 * eq.T_minus
    for _ in range(max_doublings):
        if make(hi)[1]:
            break
        hi *= 2.0
    else:
        raise GConstructionFailed(f"no amplitude up to {hi:.3g} satisfies the G conditions")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if make(mid)[1] else (mid, hi)
    G, ok = make(margin * hi)
    if not ok:
        raise GConstructionFailed("amplitude with margin fails the G conditions")
    return G.g, G


def homotopy_from_g(spec: GSpec) -> HomotopySetup:
    return HomotopySetup(spec.tau1, spec)


# ---------------------------------------------------------------------------
# Speed preservation


@dataclass
class SpeedReport:
    taus: list
    speeds: list
    stderrs: list
    c0: float
    c1: float | None
    c1_stderr: float | None
    margins: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "tau": self.taus,
            "c": self.speeds,
            "stderr": self.stderrs,
            "c0": self.c0,
            "c1": self.c1,
            "c1_stderr": self.c1_stderr,
            "worst_margin": self.margins,
        }


def _tolerance(c, e1, e2, rel):
    return 3.0 * (e1 + e2) + rel * abs(c)


def verify_speed_preservation(params, hom: HomotopySetup, eq: EquilibriumSet, tau_grid, grid, sim,
                              G: GFunction | None = None, rel_tol: float = 0.02,
                              speed_fn=None) -> SpeedReport:
    """Measure ``c^tau`` on ``tau_grid`` and check the lower bounds.

    ``c^tau >= c^0`` below ``tau1`` and ``c^tau >= c1 > 0`` above it, each
    up to three fit standard errors plus ``rel_tol`` relative slack.
    """
    from . import waves

    speed_fn = speed_fn or (lambda tau: waves.wave_speed_system(params, hom, tau, eq, grid, sim))
    taus = sorted({0.0, *map(float, tau_grid)})
    results = {tau: speed_fn(tau) for tau in taus}
    for tau, res in results.items():
        if res.c <= 0:
            raise SpeedSignLost(tau, res.c)
    r0 = results[0.0]
    c1 = c1_err = None
    if any(t >= hom.tau1 for t in taus):
        if G is None:
            G = GFunction(hom.g, params.h8, eq.T_minus)
            analyse_G(G)
        r1 = waves.wave_speed_scalar(G, params.D8, grid, sim, upper=G.T2)
        c1, c1_err = r1.c, r1.stderr
        if c1 <= 0:
            raise SpeedSignLost(hom.tau1, c1, "(scalar G-wave)")
    margins = {"below_tau1": np.inf, "above_tau1": np.inf}
    for tau, res in results.items():
        if tau < hom.tau1:
            m = res.c - r0.c + _tolerance(r0.c, res.stderr, r0.stderr, rel_tol)
            margins["below_tau1"] = min(margins["below_tau1"], m)
        else:
            m = res.c - c1 + _tolerance(c1, res.stderr, c1_err, rel_tol)
            margins["above_tau1"] = min(margins["above_tau1"], m)
        if m < 0:
            raise SpeedSignLost(tau, res.c, f"(lower bound violated by {-m:.3g})")
    return SpeedReport(
        taus,
        [results[t].c for t in taus],
        [results[t].stderr for t in taus],
        r0.c,
        c1,
        c1_err,
        {k: (None if np.isinf(v) else float(v)) for k, v in margins.items()},
    )


# ---------------------------------------------------------------------------
# Upper solution

# species order in which the kappa's must strictly decrease
KAPPA_ORDER = (1, 6, 2, 5, 3, 4, 7, 8)
DEFAULT_LAMBDAS = {1: 8.0, 6: 7.0, 2: 6.0, 5: 5.0, 3: 4.0, 4: 3.0, 7: 2.0, 8: 1.0}


@dataclass(frozen=True)
class UpperSolutionSpec:
    params: KineticParams
    T_minus: float
    epsilon: float
    kappa: np.ndarray  # kappa_1..kappa_8

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((8, s.size))
        for i in range(7):
            out[i] = kinetics.phi_vector(self.params, self.T_minus + self.kappa[i] * s)[i]
        out[7] = self.T_minus + self.kappa[7] * s
        return out

    def to_dict(self):
        return {"epsilon": self.epsilon, "kappa": [float(k) for k in self.kappa]}


def build_upper_solution(params, eq: EquilibriumSet, epsilon: float, lambdas: dict | None = None) -> UpperSolutionSpec:
    lambdas = DEFAULT_LAMBDAS if lambdas is None else lambdas
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lam = [float(lambdas[i]) for i in KAPPA_ORDER]
    if any(a <= b for a, b in zip(lam, lam[1:])):
        raise ValueError("lambdas must decrease strictly along species order 1,6,2,5,3,4,7,8")
    kappa = np.array([1.0 + epsilon * float(lambdas[i]) for i in range(1, 9)])
    return UpperSolutionSpec(params, eq.T_minus, float(epsilon), kappa)


@dataclass
class UpperSolutionReport:
    epsilon: float
    s_max: float
    taus: list
    n_s: int
    worst: float  # largest component value found (must be < 0)
    worst_at: tuple  # (s, tau, component)

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "s_max": self.s_max,
            "tau": self.taus,
            "n_s": self.n_s,
            "worst_margin": self.worst,
            "worst_at": {"s": self.worst_at[0], "tau": self.worst_at[1], "component": self.worst_at[2]},
        }


def s_samples(s_max: float, n_s: int) -> np.ndarray:
    """Geometric samples near 0 merged with uniform samples up to ``s_max``."""
    geo = np.geomspace(1e-6 * s_max, s_max, n_s // 2)
    lin = np.linspace(s_max / n_s, s_max, n_s - n_s // 2)
    return np.unique(np.concatenate([geo, lin]))


def check_upper_solution(params, hom, psi: UpperSolutionSpec, tau_grid, s_max: float | None = None,
                         n_s: int = 400) -> UpperSolutionReport:
    s_max = params.T0 - psi.T_minus if s_max is None else s_max
    s = s_samples(s_max, n_s)
    states = psi(s)
    worst, where = -np.inf, None
    for tau in tau_grid:
        F = kinetics.eval_F_tau(params, hom, float(tau), states)
        i, j = np.unravel_index(np.argmax(F), F.shape)
        if F[i, j] > worst:
            worst, where = float(F[i, j]), (float(s[j]), float(tau), int(i) + 1)
    rep = UpperSolutionReport(psi.epsilon, float(s_max), [float(t) for t in tau_grid], int(s.size), worst, where)
    if worst >= 0:
        raise UpperSolutionViolated(*where, worst)
    return rep


def find_upper_solution(params, hom, eq, tau_grid, epsilon0: float = 0.1, lambdas=None,
                        max_halvings: int = 30, n_s: int = 400):
    """Halve epsilon until the sampled check passes; returns ``(psi, report)``."""
    eps = epsilon0
    last = None
    for _ in range(max_halvings):
        psi = build_upper_solution(params, eq, eps, lambdas)
        try:
            return psi, check_upper_solution(params, hom, psi, tau_grid, n_s=n_s)
        except UpperSolutionViolated as exc:
            last = exc
            eps *= 0.5
    raise last


# ---------------------------------------------------------------------------
# Vector q


def construct_q(params, hom, tau: float, slack: float = 1.05) -> np.ndarray:
    """Positive ``q`` with ``(F^tau)'(0) q < 0`` by back-substitution from ``q8 = 1``."""
    p = params
    J = kinetics.jacobian(p, hom, tau, np.zeros(8))
    th = lambda i, j: J[i - 1, j - 1]  # noqa: E731
    h = -np.diag(J)  # h_1..h_7 and -H^tau in slot 8
    q = np.zeros(8)
    q[7] = 1.0
    for i in (3, 4, 7):
        q[i - 1] = slack * th(i, 8) * q[7] / h[i - 1]
    q[4] = slack * th(5, 7) * q[6] / h[4]
    base = th(8, 6) * slack * th(6, 5) * q[4] / h[5]
    delta = h[7] - base
    if not delta > 0:
        raise ConditionZ1Violated(
            f"tau={tau:g}: theta86*theta65*q5/h6 = {base:.6g} is not below -H = {h[7]:.6g}"
        )
    q[0] = delta / (4.0 * th(8, 1)) if th(8, 1) > 0 else 1.0
    q[1] = delta * h[5] / (4.0 * slack * th(8, 6) * th(6, 2)) if th(8, 6) * th(6, 2) > 0 else 1.0
    q[5] = slack * (th(6, 5) * q[4] + th(6, 2) * q[1]) / h[5]
    if not np.all(q > 0):
        raise ConditionZ1Violated(f"tau={tau:g}: non-positive q entry {q}")
    Jq = J @ q
    if not np.all(Jq < 0):
        raise ConditionZ1Violated(f"tau={tau:g}: J q = {Jq} not strictly negative")
    return q
