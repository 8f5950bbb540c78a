"""Equilibria of the kinetics: phi(T), the rational source P(T), its roots.

P(T) = T Q(T) / S(T) with S > 0 on T >= 0, so the positive equilibria are
the positive roots of the cubic Q. The numerator R = T Q is expanded exactly
with polynomial arithmetic and cross-checked against a Chebyshev-node fit and
the closed form of its linear coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from . import kinetics
from .errors import CoefficientMismatch, ConditionPViolated, SearchExhausted, SignFlipAcrossTau
from .kinetics import KineticParams

# phi_i are rational with no positive poles
_PHI_NAMES = [f"phi{i}" for i in range(1, 8)]


@dataclass
class PhiValues:
    T: float
    values: np.ndarray  # phi1..phi7
    limits: np.ndarray  # w_{i,l}

    def __getitem__(self, i):
        """1-based access: ``phi[3]`` is phi3."""
        return self.values[i - 1]

    def to_dict(self):
        d = dict(zip(_PHI_NAMES, map(float, self.values)))
        d["limits"] = [float(x) for x in self.limits]
        return d


def phi(params: KineticParams, T: float) -> PhiValues:
    if T < 0:
        raise ValueError("T must be >= 0")
    return PhiValues(float(T), kinetics.phi_vector(params, T), kinetics.phi_limits(params))


# ---------------------------------------------------------------------------
# Rational form of P


def coefficient_d(params: KineticParams) -> float:
    """Closed form of the linear coefficient of R."""
    p = params
    h1234 = p.h1 * p.h2 * p.h3 * p.h4
    return (
        p.k5 * p.rho5 * p.k6 * p.rho6 * p.k7 * p.rho7 * p.k8 * p.rho8 * h1234
        - h1234 * p.h5 * p.h6 * p.h7 * p.h8
    )


def _rational_parts(params: KineticParams) -> tuple[Polynomial, Polynomial]:
    """Exact ``P1, P2`` with ``P = P1 (T0 - T) / P2 - h8 T``."""
    p = params
    T = Polynomial([0.0, 1.0])
    N3, D3 = p.k3 * p.rho3 * T, p.k3 * T + p.h3
    N4, D4 = p.k4 * p.rho4 * T, p.k4 * T + p.h4
    N7, D7 = p.k7 * p.rho7 * T, p.k7 * T + p.h7
    N5, D5 = p.k5 * p.rho5 * N7, p.k5 * N7 + p.h5 * D7
    N2 = p.k2 * N4 * N5  # phi2 = N2 / (h2 D4 D5)
    M6 = p.k6 * p.h2 * N5 * D4 + p.kbar6 * N2
    Dn = p.h2 * D4 * D5
    N6, D6 = p.rho6 * M6, M6 + p.h6 * Dn
    P1 = N6 * (p.k8 * p.h1 * D3 + p.kbar8 * p.k1 * N3)
    P2 = D6 * p.h1 * D3
    return P1, P2


@dataclass
class RationalP:
    params: KineticParams
    P1: Polynomial
    P2: Polynomial
    R: Polynomial  # quartic numerator a T^4 + b T^3 + c T^2 + d T
    fit_residual: float

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        """``(a, b, c, d)``."""
        c = np.zeros(5)
        c[: len(self.R.coef)] = self.R.coef
        return float(c[4]), float(c[3]), float(c[2]), float(c[1])

    @property
    def Q(self) -> Polynomial:
        a, b, c, d = self.coefficients
        return Polynomial([d, c, b, a])

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        return self.R(T) / self.P2(T)

    def derivative(self, T):
        T = np.asarray(T, dtype=float)
        s = self.P2(T)
        return (self.R.deriv()(T) * s - self.R(T) * self.P2.deriv()(T)) / s**2

    def to_dict(self):
        a, b, c, d = self.coefficients
        return {"a": a, "b": b, "c": c, "d": d, "P2": [float(x) for x in self.P2.coef]}


def build_P(params: KineticParams, rtol: float = 1e-9) -> RationalP:
    P1, P2 = _rational_parts(params)
    T0 = params.T0
    R = P1 * Polynomial([T0, -1.0]) - params.h8 * Polynomial([0.0, 1.0]) * P2
    R = Polynomial(R.coef[:5])

    # Independent route: sample R = P * P2 at Chebyshev nodes on [0, 2 T0]
    # and solve the Vandermonde system for (d, c, b, a).
    k = np.arange(5)
    nodes = T0 * (1.0 - np.cos((2 * k + 1) * np.pi / 10))
    samples = kinetics.P(params, nodes) * P2(nodes)
    V = np.vander(nodes, 5, increasing=True)[:, 1:]
    fit = np.linalg.lstsq(V, samples, rcond=None)[0]
    scale = np.max(np.abs(R.coef))
    fit_residual = float(np.max(np.abs(fit - R.coef[1:5])) / scale)
    if fit_residual > rtol * 1e3:
        raise CoefficientMismatch(f"sampled fit disagrees with expansion (rel {fit_residual:.2e})")
    d_closed = coefficient_d(params)
    d = R.coef[1]
    if abs(d - d_closed) > rtol * max(abs(d_closed), 1e-300) and abs(d - d_closed) > 1e-12 * scale:
        raise CoefficientMismatch(f"d = {d!r} but closed form gives {d_closed!r}")
    return RationalP(params, P1, P2, R, fit_residual)


# ---------------------------------------------------------------------------
# Equilibria


@dataclass
class EquilibriumSet:
    params: KineticParams
    T_plus: float
    T_bar: float
    T_minus: float
    w_plus: np.ndarray
    w_bar: np.ndarray
    w_minus: np.ndarray
    dP: dict  # P'(T*) keyed by "plus", "bar", "minus"
    rational: RationalP = field(repr=False)

    @property
    def states(self) -> dict:
        return {"plus": self.w_plus, "bar": self.w_bar, "minus": self.w_minus}

    @property
    def roots(self) -> tuple[float, float, float]:
        return (self.T_plus, self.T_bar, self.T_minus)

    def to_dict(self) -> dict:
        Q = self.rational.Q
        return {
            "roots": {"T_plus": self.T_plus, "T_bar": self.T_bar, "T_minus": self.T_minus},
            "states": {k: [float(x) for x in v] for k, v in self.states.items()},
            "dP": {k: float(v) for k, v in self.dP.items()},
            "dP_signs": {k: int(np.sign(v)) for k, v in self.dP.items()},
            "dQ_signs": {
                "bar": int(np.sign(Q.deriv()(self.T_bar))),
                "minus": int(np.sign(Q.deriv()(self.T_minus))),
            },
            "Q_coefficients": {"a": float(Q.coef[3]), "b": float(Q.coef[2]), "c": float(Q.coef[1]), "d": float(Q.coef[0])},
            "residual_F": max(float(np.max(np.abs(kinetics.eval_F(self.params, w)))) for w in self.states.values()),
        }


def _bracket_roots(f, lo, hi, n=200, xtol=1e-14):
    grid = np.linspace(lo, hi, n + 1)
    vals = f(grid)
    roots = []
    for i in range(n):
        a, b = vals[i], vals[i + 1]
        if a == 0.0 and i > 0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(brentq(f, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    return roots


def find_equilibria(params: KineticParams) -> EquilibriumSet:
    rp = build_P(params)
    a, b, c, d = rp.coefficients
    if d >= 0:
        raise ConditionPViolated(ConditionPViolated.D_NON_NEGATIVE, f"d = {d:.6g}")
    Q = rp.Q
    # P < 0 for T >= T0, so all positive roots lie in (0, T0)
    roots = [r for r in _bracket_roots(Q, 0.0, params.T0) if r > 0]
    if not roots:
        raise ConditionPViolated(ConditionPViolated.NO_POSITIVE_ROOTS)
    if len(roots) != 2:
        raise ConditionPViolated(ConditionPViolated.WRONG_ROOT_COUNT, f"roots {roots}")
    T_bar, T_minus = roots
    dQ = Q.deriv()
    if not (dQ(T_bar) > 0 and dQ(T_minus) < 0):
        raise ConditionPViolated(ConditionPViolated.WRONG_DERIVATIVE_SIGNS)
    dPs = {k: float(kinetics.dP(params, t)) for k, t in (("plus", 0.0), ("bar", T_bar), ("minus", T_minus))}
    if not (dPs["plus"] < 0 < dPs["bar"] and dPs["minus"] < 0):
        raise ConditionPViolated(ConditionPViolated.WRONG_DERIVATIVE_SIGNS, str(dPs))
    return EquilibriumSet(
        params=params,
        T_plus=0.0,
        T_bar=float(T_bar),
        T_minus=float(T_minus),
        w_plus=np.zeros(8),
        w_bar=kinetics.equilibrium_state(params, T_bar),
        w_minus=kinetics.equilibrium_state(params, T_minus),
        dP=dPs,
        rational=rp,
    )


def equilibria_at_tau(params, hom, tau, eq: EquilibriumSet | None = None, newton_steps: int = 8) -> dict:
    """Zeros of ``F^tau`` computed from scratch.

    The thrombin levels are bracketed on ``P(T) + gamma g(T)`` and the full
    8-vectors are then polished by Newton on ``F^tau`` itself, so the result
    is independent of the tau = 0 computation it is usually compared with.
    """
    _, _, gamma = hom.coefficients(tau)
    f = lambda T: kinetics.P(params, T) + gamma * hom.g(T)  # noqa: E731
    Ts = [0.0] + [r for r in _bracket_roots(f, 0.0, params.T0, n=2000) if r > 1e-12]
    out = {}
    for name, T in zip(("plus", "bar", "minus"), Ts):
        w = kinetics.equilibrium_state(params, T)
        for _ in range(newton_steps):
            r = kinetics.eval_F_tau(params, hom, tau, w)
            if np.max(np.abs(r)) < 1e-15:
                break
            w = w - np.linalg.solve(kinetics.jacobian(params, hom, tau, w), r)
        out[name] = w
    return out


# ---------------------------------------------------------------------------
# Stability


@dataclass
class StabilityReport:
    tau_grid: list
    principal: dict  # name -> list of principal eigenvalues over tau_grid
    signs: dict  # name -> sign (+1 / -1), tau-independent
    eigenvalues_tau1: dict  # name -> numerically computed eigenvalues at tau = 1
    formula_tau1: dict  # name -> diagonal formula list at tau = 1

    def sign_triple(self):
        return tuple(self.signs[k] for k in ("plus", "bar", "minus"))

    def to_dict(self):
        return {
            "tau_grid": list(map(float, self.tau_grid)),
            "principal": {k: list(map(float, v)) for k, v in self.principal.items()},
            "signs": self.signs,
            "eigenvalues_tau1": {k: [float(x) for x in v] for k, v in self.eigenvalues_tau1.items()},
            "formula_tau1": {k: [float(x) for x in v] for k, v in self.formula_tau1.items()},
        }


def stability_formula_tau1(params: KineticParams, T: float, dP_value: float) -> np.ndarray:
    """Eigenvalues at tau = 1: the diagonal of the triangularised Jacobian at ``(phi(T), T)``.

    Species 5 and 6 carry their full diagonal entries ``-(k5 phi7 + h5)`` and
    ``-(kbar6 phi2 + k6 phi5 + h6)``; these reduce to ``-h5``, ``-h6`` only at T = 0.
    """
    p = params
    ph = kinetics.phi_vector(p, T)
    return np.array(
        [
            dP_value,
            -p.h1,
            -p.h2,
            -p.k3 * T - p.h3,
            -p.k4 * T - p.h4,
            -p.k5 * ph[6] - p.h5,
            -p.kbar6 * ph[1] - p.k6 * ph[4] - p.h6,
            -p.k7 * T - p.h7,
        ]
    )


def stability_list_literal(params: KineticParams, T: float, dP_value: float) -> np.ndarray:
    """Short-hand list with ``-h5, -h6``; exact at T = 0 only."""
    p = params
    return np.array([dP_value, -p.h1, -p.h2, -p.k3 * T - p.h3, -p.k4 * T - p.h4, -p.h5, -p.h6, -p.k7 * T - p.h7])


def classify_stability(params, hom, eq: EquilibriumSet, tau_grid) -> StabilityReport:
    tau_grid = sorted(set(float(t) for t in tau_grid) | {1.0})
    principal = {}
    signs = {}
    eig1 = {}
    formula = {}
    for name, w in eq.states.items():
        lam = []
        for tau in tau_grid:
            ev = np.linalg.eigvals(kinetics.jacobian(params, hom, tau, w))
            lam.append(float(np.max(ev.real)))
            if tau == 1.0:
                eig1[name] = np.sort(ev.real)
        s = set(np.sign(lam))
        if len(s) != 1 or 0 in s:
            raise SignFlipAcrossTau(f"principal eigenvalue sign of w_{name} varies over tau: {lam}")
        principal[name] = lam
        signs[name] = int(s.pop())
        T = float(w[7])
        formula[name] = np.sort(stability_formula_tau1(params, T, eq.dP[name]))
    return StabilityReport(tau_grid, principal, signs, eig1, formula)


# ---------------------------------------------------------------------------
# Parameter search

# Box around the inhibition family used by the repo fixtures: rates O(10),
# weak direct activation of v6 so that thrombin growth starts quadratically.
DEFAULT_BOX = {
    **{f"k{i}": (5.0, 20.0) for i in (1, 2, 3, 4, 5, 7, 8)},
    "k6": (0.05, 0.2),
    "kbar6": (10.0, 40.0),
    "kbar8": (5.0, 20.0),
    **{f"h{i}": (5.0, 20.0) for i in range(1, 8)},
    "h8": (1.0, 2.5),
    **{f"rho{i}": (1.0, 1.0) for i in range(3, 9)},
    "D1": (0.5, 0.5),
    "D2": (0.5, 0.5),
    **{f"D{i}": (1.0, 1.0) for i in range(3, 9)},
}


def search_bistable_params(box: dict | None = None, seed: int = 0, budget: int = 2000,
                           min_gap: float = 0.05) -> KineticParams:
    """Log-uniform random search for a parameter set satisfying Condition P.

    ``min_gap`` asks for roots separated by at least that fraction of T0 so the
    result is not perched on a fold. Values are rounded to 4 significant
    digits to keep fixtures readable.
    """
    box = dict(DEFAULT_BOX if box is None else box)
    rng = np.random.default_rng(seed)
    names = [f.name for f in KineticParams.__dataclass_fields__.values()]
    for _ in range(budget):
        values = {}
        for name in names:
            lo, hi = box[name]
            x = lo if lo == hi else float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            values[name] = float(f"{x:.4g}")
        params = KineticParams(**values)
        try:
            eq = find_equilibria(params)
        except ConditionPViolated:
            continue
        gaps = np.diff([0.0, eq.T_bar, eq.T_minus])
        if np.min(gaps) >= min_gap * params.T0:
            return params
    raise SearchExhausted(f"no bistable parameter set in {budget} draws (seed {seed})")
