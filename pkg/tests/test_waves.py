from types import SimpleNamespace

import numpy as np
import pytest

from pulselab import homotopy, kinetics, waves
from pulselab.errors import CflViolation, FrontLeftDomain, NoFrontDetected, NonFiniteState
from pulselab.waves import DIRICHLET, NEUMANN, Grid, Profile, SimConfig

from conftest import cubic


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid("full", 10.0, 50)
    with pytest.raises(ValueError):
        Grid("ring", 10.0, 200)
    g = Grid("half", 10.0, 200)
    assert g.dx == pytest.approx(0.05) and g.x[0] == 0.0 and g.x[-1] == 10.0
    assert Grid("full", 10.0, 200).dx == pytest.approx(0.1)
    assert Grid.with_spacing("full", 10.0, 0.1).N == 200


def test_weighted_sup():
    grid = Grid("half", 10.0, 100)
    x = grid.x
    vals = np.zeros((8, x.size))
    vals[2] = 1.0 / (1.0 + x)
    prof = Profile(grid, vals)
    assert prof.weighted_sup == pytest.approx(np.max(np.sqrt(1 + x**2) / (1 + x)))


def test_profile_rejects_nan():
    grid = Grid("half", 10.0, 100)
    vals = np.zeros((8, 101))
    vals[0, 3] = np.nan
    with pytest.raises(NonFiniteState):
        Profile(grid, vals)


def test_profile_csv_roundtrip(tmp_path):
    grid = Grid("half", 5.0, 100)
    vals = np.random.default_rng(0).uniform(size=(8, 101))
    p = tmp_path / "p.csv"
    Profile(grid, vals).to_csv(p, header_comment="config_hash=abc")
    assert p.read_text().startswith("# config_hash=abc\nx,v1,")
    back = Profile.from_csv(p, grid)
    np.testing.assert_array_equal(back.values, vals)


def test_laplacian_exact_on_quadratic():
    grid = Grid("full", 1.0, 100, NEUMANN, NEUMANN)
    u = grid.x**2
    lap = waves.laplacian(u[None, :], grid.dx, NEUMANN, NEUMANN)[0]
    np.testing.assert_allclose(lap[1:-1], 2.0, rtol=1e-9)


def test_cfl_rule():
    with pytest.raises(CflViolation):
        SimConfig(t_end=1.0, dt=0.01).time_step(0.1, 1.0)
    assert SimConfig(t_end=1.0, dt=0.01, stepper="imex").time_step(0.1, 1.0) == 0.01
    assert SimConfig(t_end=1.0).time_step(0.1, 1.0) == pytest.approx(0.9 * 0.01 / 2)


@pytest.mark.parametrize("stepper,dt", [("explicit", None), ("imex", 0.02)])
def test_equilibrium_is_stationary(pos_params, pos_hom, pos_eq, stepper, dt):
    grid = Grid("full", 10.0, 200, NEUMANN, NEUMANN)
    init = Profile(grid, np.repeat(pos_eq.w_minus[:, None], grid.N + 1, axis=1))
    traj = waves.simulate(pos_params, pos_hom, 0.3, init, SimConfig(t_end=5.0, dt=dt, stride=100, stepper=stepper))
    for snap in traj.snapshots:
        assert np.max(np.abs(snap.values - init.values)) <= 1e-12


def test_imex_and_explicit_agree(pos_params, pos_hom, pos_eq):
    grid = Grid("full", 20.0, 200, NEUMANN, NEUMANN)
    init = waves.tanh_front(grid, pos_eq.w_minus, width=2.0)
    a = waves.simulate(pos_params, pos_hom, 0.0, init, SimConfig(t_end=2.0, stride=10_000))
    b = waves.simulate(pos_params, pos_hom, 0.0, init, SimConfig(t_end=2.0, dt=a.times[-1] / 2000, stride=10_000, stepper="imex"))
    assert np.max(np.abs(a.snapshots[-1].values - b.snapshots[-1].values)) < 5e-3


def test_comparison_principle(pos_params, pos_hom, pos_eq):
    grid = Grid("full", 20.0, 200, NEUMANN, NEUMANN)
    lo = waves.tanh_front(grid, 0.8 * pos_eq.w_minus, width=3.0)
    hi = Profile(grid, lo.values + 0.1 * pos_eq.w_minus[:, None] * np.exp(-grid.x**2 / 10)[None, :])
    # explicit Euler is order preserving only with dt * (2D/dx^2 + |J_ii|) <= 1
    cfg = SimConfig(t_end=5.0, stride=100, cfl=0.4)
    for tau in (0.0, 0.6):
        A = waves.simulate(pos_params, pos_hom, tau, lo, cfg)
        B = waves.simulate(pos_params, pos_hom, tau, hi, cfg)
        for a, b in zip(A.snapshots, B.snapshots):
            assert np.all(b.values >= a.values - 1e-10)


def test_box_below_w_minus_is_invariant(pos_params, pos_hom, pos_eq):
    grid = Grid("full", 20.0, 200, NEUMANN, NEUMANN)
    rng = np.random.default_rng(2)
    init = Profile(grid, pos_eq.w_minus[:, None] * rng.uniform(0, 1, (8, grid.N + 1)))
    traj = waves.simulate(pos_params, pos_hom, 0.0, init, SimConfig(t_end=5.0, stride=200, cfl=0.4))
    for snap in traj.snapshots:
        assert np.all(snap.values <= pos_eq.w_minus[:, None] + 1e-12)
        assert np.all(snap.values >= -1e-12)


def test_front_position_interpolates():
    x = np.linspace(0, 10, 11)
    u = 1.0 - x / 10.0
    assert waves.front_position(x, u, 0.25) == pytest.approx(7.5)
    assert waves.front_position(x, u, 2.0) is None


def test_fit_speed_exact_line():
    t = np.linspace(0, 10, 41)
    c, err, window, n = waves.fit_speed(t, 3.0 - 0.7 * t)
    assert c == pytest.approx(-0.7) and err < 1e-12
    assert window == (5.0, 10.0) and n == 21


@pytest.mark.parametrize("a", [0.25, 0.4])
def test_scalar_cubic_speed(a):
    res = waves.wave_speed_scalar(cubic(a), 1.0, waves.wave_grid(60.0, 0.1), SimConfig(t_end=60.0, stride=50), upper=1.0)
    assert res.c == pytest.approx((1 - 2 * a) / np.sqrt(2), abs=1e-2)
    assert res.stderr < 0.05 * abs(res.c)


def test_scalar_cubic_symmetric_case():
    res = waves.wave_speed_scalar(cubic(0.5), 1.0, waves.wave_grid(30.0, 0.1), SimConfig(t_end=40.0, stride=50), upper=1.0)
    assert abs(res.c) <= 1e-2


def test_scalar_speed_scales_with_diffusion():
    a = 0.25
    res = waves.wave_speed_scalar(cubic(a), 4.0, waves.wave_grid(80.0, 0.2), SimConfig(t_end=40.0, stride=25), upper=1.0)
    assert res.c == pytest.approx(2.0 * (1 - 2 * a) / np.sqrt(2), abs=2e-2)


def test_front_leaving_domain():
    with pytest.raises(FrontLeftDomain):
        waves.wave_speed_scalar(cubic(0.1), 1.0, waves.wave_grid(10.0, 0.1), SimConfig(t_end=40.0, stride=50), upper=1.0)


def test_front_stalled_in_boundary_layer():
    # the level set stops short of the margin, the pinned edge still gets disturbed
    grid = waves.wave_grid(10.0, 0.1)
    with pytest.raises(FrontLeftDomain):
        waves.track_front(cubic(0.1), [1.0], waves.tanh_front(grid, [1.0]), SimConfig(t_end=40.0, stride=50),
                          0, 0.5, margin_cells=5)


def test_too_few_snapshots_for_a_fit():
    with pytest.raises(NoFrontDetected):
        waves.wave_speed_scalar(cubic(0.25), 1.0, waves.wave_grid(20.0, 0.1), SimConfig(t_end=0.01, stride=50), upper=1.0)


def test_no_front_when_state_collapses():
    grid = Grid("full", 20.0, 200, NEUMANN, NEUMANN)
    t, pos, final = waves.track_front(lambda u: -u, [1.0], waves.tanh_front(grid, [1.0]), SimConfig(t_end=5.0, stride=50),
                                      0, 0.5)
    assert np.isnan(pos[-1])
    with pytest.raises(NoFrontDetected):
        waves._speed_from_track(t, pos, final, grid, {})


@pytest.mark.parametrize("a,sign", [(0.1, 1), (0.3, 1), (0.5, 0), (0.7, -1)])
def test_speed_sign_criterion_on_cubic(a, sign):
    assert waves.speed_sign_scalar_criterion(cubic(a), 1.0) == sign
    assert waves.scalar_integral(cubic(a), 1.0) == pytest.approx((1 - 2 * a) / 12, abs=1e-14)


def test_system_speed_positive(pos_wave):
    assert pos_wave.c > 0
    assert pos_wave.stderr < 0.05 * pos_wave.c
    d = pos_wave.to_dict()
    assert set(d) >= {"c", "stderr", "n_points", "window"}


def test_system_speed_negative(neg_params, neg_eq, neg_wave):
    assert neg_wave.c < 0
    assert waves.speed_sign_scalar_criterion(lambda T: kinetics.P(neg_params, T), neg_eq.T_minus) == -1


def test_sign_agreement_positive(pos_params, pos_eq, pos_wave):
    assert waves.speed_sign_scalar_criterion(lambda T: kinetics.P(pos_params, T), pos_eq.T_minus) == np.sign(pos_wave.c)


@pytest.mark.slow
def test_system_speed_refinement(pos_params, pos_hom, pos_eq, pos_wave):
    fine = waves.wave_speed_system(pos_params, pos_hom, 0.0, pos_eq, waves.wave_grid(200.0, 0.05),
                                   SimConfig(t_end=30.0, stride=200))
    assert abs(fine.c - pos_wave.c) < 0.02 * abs(pos_wave.c)


def test_system_speed_dt_and_shift(pos_params, pos_hom, pos_eq, pos_wave, wave_setup):
    grid, _ = wave_setup
    half_dt = waves.wave_speed_system(pos_params, pos_hom, 0.0, pos_eq, grid, SimConfig(t_end=30.0, stride=100, cfl=0.45))
    shifted = waves.wave_speed_system(pos_params, pos_hom, 0.0, pos_eq, grid, SimConfig(t_end=30.0, stride=50), center=-20.0)
    for res in (half_dt, shifted):
        assert abs(res.c - pos_wave.c) < 0.02 * abs(pos_wave.c)


def test_profile_shape_converges(pos_params, pos_hom, pos_eq):
    grid = waves.wave_grid(60.0, 0.1)
    init = waves.tanh_front(grid, pos_eq.w_minus, center=-40.0)
    traj = waves.simulate(pos_params, pos_hom, 0.0, init, SimConfig(t_end=45.0, stride=3333))
    x = grid.x
    level = 0.5 * pos_eq.T_minus

    def aligned(snap):
        shift = waves.front_position(x, snap.values[7], level)
        return np.interp(np.linspace(-15, 15, 301), x - shift, snap.values[7])

    shapes = [aligned(s) for s in traj.snapshots[1:]]
    diffs = [np.max(np.abs(a - b)) for a, b in zip(shapes, shapes[1:])]
    assert diffs[-1] < 1e-3
    assert diffs[-1] < diffs[0]


def test_G_wave_speed_has_sign_of_I2():
    spec, _ = homotopy.build_g(SimpleNamespace(h8=1.0), SimpleNamespace(T_bar=0.3, T_minus=1.0), 0.5, margin=1.0)
    grid = waves.wave_grid(40.0, 0.1)
    cfg = SimConfig(t_end=30.0, stride=50)
    for factor in (0.9, 1.3):
        G = homotopy.GFunction(homotopy.GSpec(spec.m, spec.r, spec.A * factor, 0.5), 1.0, 1.0)
        homotopy.analyse_G(G)
        assert len(G.zeros) == 3
        res = waves.wave_speed_scalar(G, 1.0, grid, cfg, upper=G.T2)
        assert np.sign(res.c) == np.sign(G.I2)
