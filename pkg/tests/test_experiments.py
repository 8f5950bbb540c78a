import json

import numpy as np
import pytest

from pulselab import config, equilibria, experiments, homotopy, waves
from pulselab.errors import ConditionPViolated, Inconclusive, SchemaError, StageFailed, Unclassified

from conftest import all_ones, load_params


@pytest.fixture(scope="module")
def pos_dichotomy(pos_params, pos_hom, pos_eq, pos_wave, pos_pulse0, wave_setup):
    grid, sim = wave_setup
    return experiments.run_dichotomy(pos_params, pos_hom, pos_eq, grid, sim, params_id="positive",
                                     wave=pos_wave, attempt=(pos_pulse0, None, None))


@pytest.fixture(scope="module")
def threshold(pos_params, pos_eq, pos_pulse0, pos_wave):
    return experiments.run_threshold(pos_params, pos_eq, pos_pulse0, [0.0, 0.6, 0.8, 1.2, 1.5], c0=pos_wave.c)


def test_dichotomy_positive(pos_dichotomy):
    rep, pulse = pos_dichotomy
    assert rep.verdict == "consistent" and rep.consistent
    assert rep.c > 0 and rep.pulse_found and rep.integral_sign == 1
    assert pulse is not None and rep.residual_sup <= 1e-8


def test_dichotomy_negative(neg_params, neg_hom, neg_eq, neg_wave, neg_attempt, wave_setup):
    grid, sim = wave_setup
    rep, pulse = experiments.run_dichotomy(neg_params, neg_hom, neg_eq, grid, sim, wave=neg_wave, attempt=neg_attempt)
    assert rep.verdict == "consistent"
    assert rep.c < 0 and not rep.pulse_found and pulse is None
    assert rep.integral_sign == -1
    assert 0 < rep.failed_at_tau < 1
    assert json.loads(json.dumps(rep.to_dict()))["verdict"] == "consistent"


def test_dichotomy_flags_inconsistency(pos_params, pos_hom, pos_eq, pos_wave, wave_setup):
    grid, sim = wave_setup
    rep, _ = experiments.run_dichotomy(pos_params, pos_hom, pos_eq, grid, sim, wave=pos_wave,
                                       attempt=(None, "forced", 0.3))
    assert rep.verdict == "inconsistent"


def test_near_maxwell_inconclusive():
    params = load_params("near_maxwell")
    eq = equilibria.find_equilibria(params)
    hom = homotopy.homotopy_from_g(homotopy.build_g(params, eq, 0.5)[0])
    grid, sim = waves.wave_grid(100.0, 0.1), waves.SimConfig(t_end=30.0, stride=50)

    def no_attempt():
        raise AssertionError("continuation must not run")

    with pytest.raises(Inconclusive):
        experiments.run_dichotomy(params, hom, eq, grid, sim, attempt=no_attempt)


def test_threshold_outcomes(threshold, pos_wave):
    out = dict(zip(threshold.lambdas, threshold.outcomes))
    assert out == {0.0: "extinction", 0.6: "extinction", 0.8: "extinction", 1.2: "propagation", 1.5: "propagation"}
    assert threshold.monotone
    assert threshold.speed_agreement(1.2) < 0.1
    assert threshold.speed_agreement(0.8) is None


def test_zero_data_goes_extinct_at_once(threshold):
    run = threshold.runs[0]
    assert run.lam == 0.0 and run.t_stop == 0.0


def test_threshold_report_json(threshold):
    d = threshold.to_dict()
    assert d["monotone_in_lambda"] is True
    assert [r["lambda"] for r in d["runs"]] == threshold.lambdas


def test_monotone_property_detects_violation():
    def run(lam, outcome):
        return experiments.ThresholdRun(lam, outcome, None, None, 0.0, np.array([]), np.array([]), np.array([]))

    rep = experiments.ThresholdReport([run(0.5, "propagation"), run(1.0, "extinction")], 1.0, 0.0, 0.0)
    assert not rep.monotone


def test_unclassified_when_time_too_short(pos_params, pos_eq, pos_pulse0):
    grid = waves.Grid("full", 80.0, 1600, waves.NEUMANN, waves.NEUMANN)
    init = experiments.even_extension(pos_pulse0, grid, 1.2)
    with pytest.raises(Unclassified):
        experiments.classify_run(pos_params, pos_eq, init, waves.SimConfig(t_end=0.5, stride=50), 1.2)


def test_even_extension(pos_pulse0):
    grid = waves.Grid("full", 20.0, 400, waves.NEUMANN, waves.NEUMANN)
    prof = experiments.even_extension(pos_pulse0, grid, 2.0)
    np.testing.assert_allclose(prof.values, prof.values[:, ::-1])
    assert prof.values[7, 200] == pytest.approx(2.0 * pos_pulse0.values[7, 0])


def test_suite_rejects_d_nonnegative(tmp_path):
    cfg = config.from_dict({"params": all_ones(k5=2.0).to_dict()})
    with pytest.raises(StageFailed) as exc:
        experiments.run_full_suite(cfg, tmp_path)
    assert exc.value.stage == "equilibria"
    assert isinstance(exc.value.cause, ConditionPViolated)
    assert not list(tmp_path.iterdir())


def test_suite_config_missing_key():
    data = {"params": all_ones().to_dict()}
    del data["params"]["h5"]
    with pytest.raises(SchemaError, match="h5"):
        config.from_dict(data)


def test_sweep_map_respects_thread_cap(monkeypatch):
    monkeypatch.setenv("PULSELAB_THREADS", "1")
    assert experiments.max_workers(8) == 1
    monkeypatch.setenv("PULSELAB_THREADS", "3")
    assert experiments.max_workers(8) == 3 and experiments.max_workers(2) == 2
    assert experiments.sweep_map(lambda x: x * x, range(6)) == [0, 1, 4, 9, 16, 25]
