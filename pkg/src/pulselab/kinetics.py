"""Reaction terms of the 8-species coagulation model and its homotopy family.

State ordering follows the model: ``v[0..6]`` are v1..v7 and ``v[7]`` is the
thrombin concentration T. Every evaluator accepts either a single 8-vector or
an ``(8, n)`` array of states (one column per grid point).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import SampleOutsideC, SchemaError

NSPECIES = 8
# Dependency order in which phi_i(T) are computed (1-based species labels).
PHI_ORDER = (3, 4, 7, 5, 2, 6, 1)


@dataclass(frozen=True)
class KineticParams:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    k7: float
    k8: float
    kbar6: float
    kbar8: float
    h1: float
    h2: float
    h3: float
    h4: float
    h5: float
    h6: float
    h7: float
    h8: float
    rho3: float
    rho4: float
    rho5: float
    rho6: float
    rho7: float
    rho8: float
    D1: float = 1.0
    D2: float = 1.0
    D3: float = 1.0
    D4: float = 1.0
    D5: float = 1.0
    D6: float = 1.0
    D7: float = 1.0
    D8: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0:
                raise SchemaError(f"{f.name} must be > 0")

    @property
    def T0(self) -> float:
        return self.rho8

    @property
    def D(self) -> np.ndarray:
        return np.array([self.D1, self.D2, self.D3, self.D4, self.D5, self.D6, self.D7, self.D8])

    @property
    def rho(self) -> np.ndarray:
        """Capacities indexed like the state; v1, v2 carry ``inf``."""
        return np.array([np.inf, np.inf, self.rho3, self.rho4, self.rho5, self.rho6, self.rho7, self.rho8])

    def replace(self, **changes) -> "KineticParams":
        data = asdict(self)
        data.update(changes)
        return KineticParams(**data)

    def scaled(self, factor: float, which=("k", "h")) -> "KineticParams":
        """Multiply every rate constant whose name starts with a prefix in ``which``."""
        data = asdict(self)
        for key in data:
            if key.startswith(which):
                data[key] *= factor
        return KineticParams(**data)

    # serialization

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "KineticParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            key = unknown[0]
            hint = " (v1 and v2 have no capacity)" if key in ("rho1", "rho2") else ""
            raise SchemaError(f"unknown parameter key '{key}'{hint}")
        missing = [f.name for f in fields(cls) if f.name not in data]
        if missing:
            raise SchemaError(f"missing parameter key '{missing[0]}'")
        values = {}
        for key, value in data.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(f"{key} must be a number")
            values[key] = float(value)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "KineticParams":
        data = json.loads(Path(path).read_text())
        if "params" in data and isinstance(data["params"], dict):
            data = data["params"]
        return cls.from_dict(data)


def in_region_C(params: KineticParams, v, atol: float = 0.0) -> bool:
    v = np.asarray(v, dtype=float)
    return not region_C_violations(params, v, atol)


def region_C_violations(params: KineticParams, v, atol: float = 0.0) -> list[str]:
    v = np.asarray(v, dtype=float)
    out = []
    for i in range(NSPECIES):
        if np.any(v[i] < -atol):
            out.append(f"v{i + 1} < 0")
        if i >= 2 and np.any(v[i] > params.rho[i] + atol):
            out.append(f"v{i + 1} > rho{i + 1}")
    return out


def sample_region_C(params: KineticParams, n: int, rng, v12_bound) -> np.ndarray:
    """Uniform samples of C in a finite box, shape ``(8, n)``.

    v1 and v2 are unbounded in C; ``v12_bound`` gives their upper limits.
    """
    hi = params.rho.copy()
    hi[0], hi[1] = v12_bound
    return rng.uniform(0.0, 1.0, size=(NSPECIES, n)) * hi[:, None]


# ---------------------------------------------------------------------------
# Reaction terms


def eval_F(params: KineticParams, v) -> np.ndarray:
    p = params
    v = np.asarray(v, dtype=float)
    v1, v2, v3, v4, v5, v6, v7, T = v
    return np.array(
        [
            p.k1 * v3 * v6 - p.h1 * v1,
            p.k2 * v4 * v5 - p.h2 * v2,
            p.k3 * T * (p.rho3 - v3) - p.h3 * v3,
            p.k4 * T * (p.rho4 - v4) - p.h4 * v4,
            p.k5 * v7 * (p.rho5 - v5) - p.h5 * v5,
            (p.k6 * v5 + p.kbar6 * v2) * (p.rho6 - v6) - p.h6 * v6,
            p.k7 * T * (p.rho7 - v7) - p.h7 * v7,
            (p.k8 * v6 + p.kbar8 * v1) * (p.rho8 - T) - p.h8 * T,
        ]
    )


def phi_with_derivative(params: KineticParams, T):
    """Return ``(phi, dphi)``, each of shape ``(7,) + shape(T)``.

    ``phi_i(T)`` solves ``F_i(phi(T), T) = 0`` for i = 1..7, computed in the
    order 3, 4, 7, 5, 2, 6, 1.
    """
    p = params
    T = np.asarray(T, dtype=float)

    def hill(k, rho, h, x, dx):
        den = k * x + h
        return k * rho * x / den, k * rho * h / den**2 * dx

    one = np.ones_like(T)
    phi3, d3 = hill(p.k3, p.rho3, p.h3, T, one)
    phi4, d4 = hill(p.k4, p.rho4, p.h4, T, one)
    phi7, d7 = hill(p.k7, p.rho7, p.h7, T, one)
    phi5, d5 = hill(p.k5, p.rho5, p.h5, phi7, d7)
    phi2 = p.k2 / p.h2 * phi4 * phi5
    d2 = p.k2 / p.h2 * (d4 * phi5 + phi4 * d5)
    n6 = p.k6 * phi5 + p.kbar6 * phi2
    dn6 = p.k6 * d5 + p.kbar6 * d2
    phi6 = p.rho6 * n6 / (n6 + p.h6)
    d6 = p.rho6 * p.h6 * dn6 / (n6 + p.h6) ** 2
    phi1 = p.k1 / p.h1 * phi3 * phi6
    d1 = p.k1 / p.h1 * (d3 * phi6 + phi3 * d6)
    return (
        np.array([phi1, phi2, phi3, phi4, phi5, phi6, phi7]),
        np.array([d1, d2, d3, d4, d5, d6, d7]),
    )


def phi_vector(params: KineticParams, T) -> np.ndarray:
    return phi_with_derivative(params, T)[0]


def phi_limits(params: KineticParams) -> np.ndarray:
    """``w_{i,l} = lim_{T->inf} phi_i(T)`` for i = 1..7."""
    p = params
    phi3, phi4, phi7 = p.rho3, p.rho4, p.rho7
    phi5 = p.k5 * p.rho5 * phi7 / (p.k5 * phi7 + p.h5)
    phi2 = p.k2 / p.h2 * phi4 * phi5
    n6 = p.k6 * phi5 + p.kbar6 * phi2
    phi6 = p.rho6 * n6 / (n6 + p.h6)
    phi1 = p.k1 / p.h1 * phi3 * phi6
    return np.array([phi1, phi2, phi3, phi4, phi5, phi6, phi7])


def equilibrium_state(params: KineticParams, T: float) -> np.ndarray:
    """The 8-vector ``(phi(T), T)``."""
    return np.append(phi_vector(params, T), T)


def P(params: KineticParams, T):
    """Thrombin source on the manifold ``v = phi(T)``."""
    T = np.asarray(T, dtype=float)
    phi = phi_vector(params, T)
    return (params.k8 * phi[5] + params.kbar8 * phi[0]) * (params.T0 - T) - params.h8 * T


def dP(params: KineticParams, T):
    T = np.asarray(T, dtype=float)
    phi, dphi = phi_with_derivative(params, T)
    n = params.k8 * phi[5] + params.kbar8 * phi[0]
    dn = params.k8 * dphi[5] + params.kbar8 * dphi[0]
    return dn * (params.T0 - T) - n - params.h8


# ---------------------------------------------------------------------------
# Homotopy


def homotopy_coefficients(tau: float, tau1: float) -> tuple[float, float, float]:
    """Return ``(alpha, beta, gamma)`` for the two-stage deformation."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if tau < tau1:
        return 1.0, 0.0, float(tau)
    return (1.0 - tau) / (1.0 - tau1), (tau - tau1) / (1.0 - tau1), float(tau1)


@dataclass(frozen=True)
class HomotopySetup:
    """Breakpoint ``tau1`` and the bump ``g`` added to the thrombin source.

    ``g`` is any object with ``__call__(T)`` and ``derivative(T)``; the
    concrete bump lives in :mod:`pulselab.homotopy`.
    """

    tau1: float
    g: object

    def __post_init__(self):
        if not 0.0 < self.tau1 < 1.0:
            raise ValueError("tau1 must lie in (0, 1)")

    def coefficients(self, tau):
        return homotopy_coefficients(tau, self.tau1)


class _ZeroBump:
    def __call__(self, T):
        return np.zeros_like(np.asarray(T, dtype=float))

    def derivative(self, T):
        return np.zeros_like(np.asarray(T, dtype=float))

    def to_dict(self):
        return {"A": 0.0}


def trivial_homotopy(tau1: float = 0.5) -> HomotopySetup:
    """Homotopy with ``g = 0``; useful when only the replacement stage matters."""
    return HomotopySetup(tau1, _ZeroBump())


def eval_F_tau(params: KineticParams, hom: HomotopySetup, tau: float, v) -> np.ndarray:
    alpha, beta, gamma = hom.coefficients(tau)
    out = eval_F(params, v)
    T = np.asarray(v, dtype=float)[7]
    f8 = alpha * out[7]
    if beta:
        f8 = f8 + beta * P(params, T)
    if gamma:
        f8 = f8 + gamma * hom.g(T)
    out[7] = f8
    return out


def jacobian(params: KineticParams, hom: HomotopySetup, tau: float, v) -> np.ndarray:
    """Jacobian of ``F^tau``; shape ``(8, 8)`` or ``(8, 8, n)`` for stacked states."""
    p = params
    v = np.asarray(v, dtype=float)
    alpha, beta, gamma = hom.coefficients(tau)
    v1, v2, v3, v4, v5, v6, v7, T = v
    J = np.zeros((8, 8) + v.shape[1:])
    J[0, 0] = -p.h1
    J[0, 2] = p.k1 * v6
    J[0, 5] = p.k1 * v3
    J[1, 1] = -p.h2
    J[1, 3] = p.k2 * v5
    J[1, 4] = p.k2 * v4
    J[2, 2] = -(p.k3 * T + p.h3)
    J[2, 7] = p.k3 * (p.rho3 - v3)
    J[3, 3] = -(p.k4 * T + p.h4)
    J[3, 7] = p.k4 * (p.rho4 - v4)
    J[4, 4] = -(p.k5 * v7 + p.h5)
    J[4, 6] = p.k5 * (p.rho5 - v5)
    J[5, 1] = p.kbar6 * (p.rho6 - v6)
    J[5, 4] = p.k6 * (p.rho6 - v6)
    J[5, 5] = -(p.kbar6 * v2 + p.k6 * v5 + p.h6)
    J[6, 6] = -(p.k7 * T + p.h7)
    J[6, 7] = p.k7 * (p.rho7 - v7)
    J[7, 0] = alpha * p.kbar8 * (p.T0 - T)
    J[7, 5] = alpha * p.k8 * (p.T0 - T)
    H = alpha * (-(p.k8 * v6 + p.kbar8 * v1) - p.h8)
    if beta:
        H = H + beta * dP(p, T)
    if gamma:
        H = H + gamma * hom.g.derivative(T)
    J[7, 7] = H
    return J


def jacobian_fd(params, hom, tau, v, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``eval_F_tau`` at a single state."""
    v = np.asarray(v, dtype=float)
    J = np.empty((8, 8))
    for j in range(8):
        h = rel_step * (1.0 + abs(v[j]))
        e = np.zeros(8)
        e[j] = h
        J[:, j] = (eval_F_tau(params, hom, tau, v + e) - eval_F_tau(params, hom, tau, v - e)) / (2 * h)
    return J


@dataclass
class MonotoneReport:
    tau: float
    n_samples: int
    violations: list  # (sample index, i, j, value), 1-based species labels

    @property
    def ok(self) -> bool:
        return not self.violations


def check_monotone(params, hom, tau, samples, atol: float = 0.0) -> MonotoneReport:
    """Scan off-diagonal Jacobian entries of ``F^tau`` over samples in C.

    ``samples`` has shape ``(8, n)`` (or is a sequence of 8-vectors).
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim == 2 and S.shape[0] != NSPECIES and S.shape[1] == NSPECIES:
        S = S.T
    S = S.reshape(NSPECIES, -1)
    for k in range(S.shape[1]):
        bad = region_C_violations(params, S[:, k])
        if bad:
            raise SampleOutsideC(k, bad)
    J = jacobian(params, hom, tau, S)
    off = ~np.eye(NSPECIES, dtype=bool)
    violations = []
    neg = (J < -atol) & off[:, :, None]
    for i, j, k in zip(*np.nonzero(neg)):
        violations.append((int(k), int(i) + 1, int(j) + 1, float(J[i, j, k])))
    return MonotoneReport(float(tau), S.shape[1], violations)
