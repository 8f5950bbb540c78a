import numpy as np
import pytest
from numpy.polynomial import Polynomial

from pulselab import equilibria, kinetics
from pulselab.errors import ConditionPViolated, SearchExhausted, SignFlipAcrossTau
from pulselab.kinetics import trivial_homotopy

from conftest import all_ones


def _independent_quartic(params):
    """Numerator of P over a common denominator, built by a different grouping."""
    p = params
    T = Polynomial([0, 1])
    # phi3 = A3/B3 etc. with A, B linear
    A3, B3 = p.k3 * p.rho3 * T, p.k3 * T + p.h3
    A4, B4 = p.k4 * p.rho4 * T, p.k4 * T + p.h4
    A7, B7 = p.k7 * p.rho7 * T, p.k7 * T + p.h7
    A5, B5 = p.k5 * p.rho5 * A7, p.k5 * A7 + p.h5 * B7
    # n6 = k6 A5/B5 + kbar6 k2 A4 A5 / (h2 B4 B5)
    num6 = A5 * (p.k6 * p.h2 * B4 + p.kbar6 * p.k2 * A4)
    den6 = p.h2 * B4 * B5
    # phi6 = rho6 num6 / (num6 + h6 den6); phi1 = k1/h1 phi3 phi6
    S = num6 + p.h6 * den6
    inflow = p.rho6 * num6 * (p.k8 * p.h1 * B3 + p.kbar8 * p.k1 * A3)
    return inflow * Polynomial([p.T0, -1]) - p.h8 * T * p.h1 * B3 * S


def test_coefficient_d_closed_form(pos_params):
    rp = equilibria.build_P(pos_params)
    d_closed = equilibria.coefficient_d(pos_params)
    assert abs(rp.coefficients[3] - d_closed) <= 1e-10 * abs(d_closed)


def test_quartic_matches_independent_grouping(pos_params):
    rp = equilibria.build_P(pos_params)
    R2 = _independent_quartic(pos_params)
    assert np.allclose(R2.coef[5:], 0.0, atol=1e-9 * np.max(np.abs(R2.coef)))
    np.testing.assert_allclose(rp.R.coef[1:5], R2.coef[1:5], rtol=1e-10)
    assert rp.R.coef[0] == pytest.approx(0.0, abs=1e-12 * np.max(np.abs(R2.coef)))


def test_rational_form_evaluates_P(pos_params):
    rp = equilibria.build_P(pos_params)
    T = np.linspace(0.01, 1.5, 30)
    np.testing.assert_allclose(rp(T), kinetics.P(pos_params, T), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(rp.derivative(T), kinetics.dP(pos_params, T), rtol=1e-8, atol=1e-10)


def test_three_equilibria(pos_params, pos_eq):
    assert 0 < pos_eq.T_bar < pos_eq.T_minus < pos_params.T0
    for w in pos_eq.states.values():
        assert np.max(np.abs(kinetics.eval_F(pos_params, w))) <= 1e-9
    assert pos_eq.dP["plus"] < 0 < pos_eq.dP["bar"]
    assert pos_eq.dP["minus"] < 0


def test_roots_agree_with_companion_matrix(pos_eq):
    # companion-matrix roots of Q instead of bracketing
    roots = np.sort(np.real(Polynomial(equilibria.build_P(pos_eq.params).Q.coef).roots()))
    pos = roots[roots > 0]
    np.testing.assert_allclose(pos[:2], [pos_eq.T_bar, pos_eq.T_minus], rtol=1e-10)


def test_d_zero_rejected():
    with pytest.raises(ConditionPViolated) as exc:
        equilibria.find_equilibria(all_ones())
    assert exc.value.kind == ConditionPViolated.D_NON_NEGATIVE


def test_d_positive_rejected():
    with pytest.raises(ConditionPViolated, match="DNonNegative"):
        equilibria.find_equilibria(all_ones(k5=2.0))


def test_monostable_rejected(pos_params):
    # strong inhibition of thrombin: only T = 0 remains
    with pytest.raises(ConditionPViolated) as exc:
        equilibria.find_equilibria(pos_params.replace(h8=50.0))
    assert exc.value.kind == ConditionPViolated.NO_POSITIVE_ROOTS


def test_phi_values_accessors(pos_params):
    ph = equilibria.phi(pos_params, 0.3)
    assert ph[3] == ph.values[2]
    with pytest.raises(ValueError):
        equilibria.phi(pos_params, -1.0)


@pytest.mark.parametrize("tau", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_zero_set_invariance(pos_params, pos_hom, pos_eq, tau):
    states = equilibria.equilibria_at_tau(pos_params, pos_hom, tau)
    for name, w in pos_eq.states.items():
        assert np.max(np.abs(states[name] - w)) <= 1e-8


def test_stability_signs(pos_params, pos_hom, pos_eq):
    rep = equilibria.classify_stability(pos_params, pos_hom, pos_eq, [0, 0.25, 0.5, 0.75, 1])
    assert rep.sign_triple() == (-1, 1, -1)
    for name in ("plus", "bar", "minus"):
        np.testing.assert_allclose(rep.eigenvalues_tau1[name], rep.formula_tau1[name], atol=1e-10)


def test_literal_list_only_exact_at_zero(pos_params, pos_eq):
    lit0 = equilibria.stability_list_literal(pos_params, 0.0, pos_eq.dP["plus"])
    full0 = equilibria.stability_formula_tau1(pos_params, 0.0, pos_eq.dP["plus"])
    np.testing.assert_array_equal(np.sort(lit0), np.sort(full0))
    litm = equilibria.stability_list_literal(pos_params, pos_eq.T_minus, pos_eq.dP["minus"])
    fullm = equilibria.stability_formula_tau1(pos_params, pos_eq.T_minus, pos_eq.dP["minus"])
    assert np.max(np.abs(np.sort(litm) - np.sort(fullm))) > 1e-3


def test_sign_flip_detected(pos_params, pos_eq):
    class SteepBump:
        # derivative large enough to flip the sign at w_minus once gamma > 0
        def __call__(self, T):
            return 0.0 * np.asarray(T)

        def derivative(self, T):
            return 1e3 * np.ones_like(np.asarray(T, dtype=float))

    hom = kinetics.HomotopySetup(0.5, SteepBump())
    with pytest.raises(SignFlipAcrossTau):
        equilibria.classify_stability(pos_params, hom, pos_eq, [0.0, 0.25, 1.0])


def test_search_is_seeded():
    a = equilibria.search_bistable_params(seed=0)
    b = equilibria.search_bistable_params(seed=0)
    assert a == b
    eq = equilibria.find_equilibria(a)
    assert eq.T_minus - eq.T_bar >= 0.05 * a.T0


def test_search_exhausted():
    box = {k: (1.0, 1.0) for k in equilibria.DEFAULT_BOX}
    with pytest.raises(SearchExhausted):
        equilibria.search_bistable_params(box=box, budget=3)


def test_equilibrium_json(pos_eq):
    d = pos_eq.to_dict()
    assert d["dP_signs"] == {"plus": -1, "bar": 1, "minus": -1}
    assert d["residual_F"] <= 1e-9
    assert trivial_homotopy().tau1 == 0.5


def test_searched_fixture_is_reproducible():
    from conftest import load_params

    assert equilibria.search_bistable_params(seed=0) == load_params("searched_seed0")
