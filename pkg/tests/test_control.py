import math

import numpy as np
import pytest

from rtheta.control import (
    CalibrationGrid,
    CorrectionConfig,
    PidConfig,
    PidGains,
    calibrate_correction,
    correction_terminal_states,
    correction_windows,
    pid_run,
    pid_track,
    signed_log_grid,
    single_shot_correct,
)
from rtheta.dynamics import mechanical_energy
from rtheta.errors import UndefinedCorrectionError
from rtheta.planners import ActuatorBounds
from rtheta.simulate import NoiseSpec, integrate

from conftest import TARGET, X_START

CORNER = np.array([math.pi / 1800, 1 - 0.01, 0.0, 0.0])


def test_pid_config_validation():
    with pytest.raises(ValueError):
        PidGains(kp=(-1.0, 1.0))
    with pytest.raises(ValueError):
        PidConfig(dt_sample=0)
    with pytest.raises(ValueError):
        PidConfig(anti_windup="none")


def test_pid_noise_free_tracking(params, seventh_profile):
    rec = pid_track(params, seventh_profile, PidConfig(), X_START)
    assert rec.t[-1] == pytest.approx(seventh_profile.t_f)
    assert rec.states[-1, :2] == pytest.approx(TARGET, abs=5e-3)
    assert np.all(np.abs(rec.tau) <= 600) and np.all(np.abs(rec.f) <= 150)
    assert {"tau_cmd_preclip", "e_theta"} <= set(rec.extra)


def test_pid_clips_saturated_commands(params, seventh_profile):
    cfg = PidConfig(bounds=ActuatorBounds(300.0, 100.0))
    rec = pid_track(params, seventh_profile, cfg, CORNER)
    assert np.all(np.abs(rec.tau) <= 300) and np.all(np.abs(rec.f) <= 100)
    assert np.max(np.abs(rec.extra["tau_cmd_preclip"])) > 300


def test_pid_input_is_held_between_samples(params, seventh_profile):
    rec = pid_track(params, seventh_profile, PidConfig(), X_START)
    in_first_sample = rec.t[:-1] < 0.01 - 1e-12
    assert np.unique(rec.tau[:-1][in_first_sample]).size == 1


def test_conditional_integration_runs(params, seventh_profile):
    cfg = PidConfig(bounds=ActuatorBounds(300.0, 100.0), anti_windup="conditional_integration")
    X, fail = pid_run(params, seventh_profile, cfg, CORNER)
    assert np.all(np.isnan(fail)) and np.all(np.isfinite(X))


def test_pid_batch_matches_single(params, seventh_profile):
    noise = NoiseSpec("measurement", (math.pi / 3600, 0.005))
    X, _ = pid_run(params, seventh_profile, PidConfig(), X_START, noise, seed=3, trials=[0, 1])
    rec = pid_track(params, seventh_profile, PidConfig(), X_START, noise, seed=3, trial=1)
    assert X[:, 1] == pytest.approx(rec.states[-1], abs=1e-12)
    assert not np.allclose(X[:, 0], X[:, 1])


def test_signed_log_grid():
    g = signed_log_grid((1.0, 10.0))
    assert g == (-10.0, -1.0, 0.0, 1.0, 10.0)


def test_correction_windows_closed_form(seventh_profile):
    t_i = 0.5
    q, dq, _ = seventh_profile.evaluate_array(np.array([t_i]))
    q_meas = q[:, 0] - np.array([1e-3, 2e-3])
    c = np.array([2.0, 1.5, 0.05, 0.5, 0.1])
    w = correction_windows(seventh_profile, t_i, q_meas, c, seventh_profile.t_f)
    d = np.array([math.pi / 4, 3.0])
    e = np.array([1e-3, 2e-3])
    t1 = np.abs(e / dq[:, 0])
    t2 = t1 / 2.0
    assert w.t1[:, 0] == pytest.approx(t1)
    assert w.factor1[:, 0] == pytest.approx(1 + 1.5 / (t1 + 0.05) * e / d)
    assert w.factor2[:, 0] == pytest.approx(1 - 0.5 / (t2 + 0.1) * e / d)
    assert w.valid[0]


def test_correction_undefined_at_rest(params, seventh_protocol):
    # reference velocity is zero at t = 0+, so any error gives an infinite window
    cfg = CorrectionConfig(t_i=1e-9)
    with pytest.raises(UndefinedCorrectionError):
        single_shot_correct(params, seventh_protocol, cfg, CORNER)


def test_zero_error_correction_reproduces_nominal(params, seventh_protocol):
    ref = integrate(params, X_START, seventh_protocol.schedule)
    rec = single_shot_correct(params, seventh_protocol, CorrectionConfig(0.5), X_START)
    # only sub-microsecond windows from the residual tracking error are inserted
    assert len(rec.t) - len(ref.t) <= 4
    idx = np.searchsorted(rec.t, ref.t)
    assert np.array_equal(rec.t[idx], ref.t)
    assert np.max(np.abs(rec.states[idx] - ref.states)) < 1e-9


def test_single_matches_batch(params, seventh_protocol):
    cfg = CorrectionConfig(0.25 * seventh_protocol.t_f, 4.0, 3.0, 0.025, 10.0, 0.127)
    rec = single_shot_correct(params, seventh_protocol, cfg, CORNER)
    X, win, _ = correction_terminal_states(params, seventh_protocol, CORNER, cfg)
    assert rec.states[-1] == pytest.approx(X[:, 0], abs=1e-12)
    side = rec.meta["correction"]
    assert side["t1_theta"] == pytest.approx(win.t1[0, 0])


def test_correction_helps_corner(params, seventh_protocol):
    E_nom = integrate(params, X_START, seventh_protocol.schedule).terminal_energy
    before = integrate(params, CORNER, seventh_protocol.schedule).terminal_energy
    cfg = CorrectionConfig(0.25 * seventh_protocol.t_f, 4.0, 3.0, 0.025, 10.0, 0.127)
    after = mechanical_energy(params, correction_terminal_states(params, seventh_protocol, CORNER, cfg)[0])[0]
    assert abs(before - E_nom) / E_nom == pytest.approx(0.084, abs=0.01)
    assert abs(after - E_nom) < abs(before - E_nom)


SMALL_GRID = CalibrationGrid(
    t_i_fractions=(0.2,),
    c1_values=(1.0, 4.0),
    c2_values=(0.0, 3.0),
    c3_fractions=(0.01,),
    c4_values=(0.0, 10.0),
    c5_fractions=(0.05,),
)


def test_calibration_single_zero_point_picks_first(params, seventh_protocol):
    res = calibrate_correction(params, seventh_protocol, [(0.0, 0.0)], SMALL_GRID)
    assert res.status == "ok" and res.mre < 1e-6
    assert (res.config.c1, res.config.c2, res.config.c4) == (1.0, 0.0, 0.0)


def test_calibration_is_deterministic_and_improves(params, seventh_protocol):
    errors = [(math.pi / 1800, -0.01), (-math.pi / 1800, 0.01), (0.0, -0.01)]
    a = calibrate_correction(params, seventh_protocol, errors, SMALL_GRID)
    b = calibrate_correction(params, seventh_protocol, errors, SMALL_GRID)
    assert a.config == b.config and a.mre == b.mre
    assert a.mre <= a.baseline_mre and a.n_candidates == 8


def test_calibration_refinement_does_not_worsen(params, seventh_protocol):
    errors = [(math.pi / 1800, -0.01), (-math.pi / 1800, 0.01)]
    coarse = calibrate_correction(params, seventh_protocol, errors, SMALL_GRID)
    fine = calibrate_correction(params, seventh_protocol, errors, SMALL_GRID, refine_iters=15)
    assert fine.mre <= coarse.mre
    assert fine.per_t_i["0.2"]["grid_mre"] == pytest.approx(coarse.mre)


def test_calibration_rejects_empty(params, seventh_protocol):
    with pytest.raises(ValueError):
        calibrate_correction(params, seventh_protocol, np.empty((0, 2)), SMALL_GRID)
