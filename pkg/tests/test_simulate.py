import math

import numpy as np
import pytest

from rtheta.dynamics import SystemParams, mechanical_energy
from rtheta.errors import DomainError, SimulationAbort
from rtheta.simulate import (
    CSV_HEADER,
    InputSchedule,
    NoiseSpec,
    SimConfig,
    integrate,
    measure,
    noise_samples,
    perturb_schedule,
    read_record_csv,
    step_grid,
    stream_uniforms,
)

from conftest import X_START


def _zero(t_end=1.0, n=11):
    t = np.linspace(0, t_end, n)
    return InputSchedule(t, np.zeros(n), np.zeros(n))


def test_schedule_validation():
    with pytest.raises(ValueError):
        InputSchedule([0, 1], [0], [0, 0])
    with pytest.raises(ValueError):
        InputSchedule([0.1, 1], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        InputSchedule([0, 1, 1], [0, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        InputSchedule([0, 1], [0, np.nan], [0, 0])
    with pytest.raises(ValueError):
        InputSchedule([0, 1], [0, 0], [0, 0], mode="spline")


def test_linear_schedule_hits_nodes_exactly():
    t = np.array([0.0, 0.3, 0.7, 1.0])
    s = InputSchedule(t, [1.0, 2.5, -1.0, 4.0], [0.0, 1.0, 2.0, 3.0])
    tau, f = s.evaluate(t)
    assert np.array_equal(tau, s.tau) and np.array_equal(f, s.f)


def test_constant_schedule_left_limit():
    s = InputSchedule([0.0, 0.5, 1.0], [1.0, 2.0, 2.0], [0.0, 0.0, 0.0], mode="piecewise_constant_left")
    assert s.evaluate(0.5)[0] == 2.0
    assert s.evaluate(0.5, left=True)[0] == 1.0
    assert 0.5 in s.step_breaks


def test_schedule_dict_round_trip():
    s = InputSchedule([0.0, 0.5, 1.0], [1.0, 2.0, 3.0], [0.0, 1.0, 0.0], breakpoints=(0.25,))
    back = InputSchedule.from_dict(s.to_dict())
    assert np.array_equal(back.times, s.times) and back.breakpoints == s.breakpoints


def test_fixed_point_without_gravity():
    p = SystemParams(g=0, B1=0, B2=0)
    rec = integrate(p, (0.3, 2.0, 0, 0), _zero(), SimConfig(dt=0.01))
    assert np.all(rec.states == np.array([0.3, 2.0, 0, 0]))


def test_radial_decay_closed_form():
    p = SystemParams(g=0)
    rec = integrate(p, (0, 1, 0, 1), _zero(), SimConfig(dt=1e-3))
    assert rec.states[-1, 3] == pytest.approx(math.exp(-2.5), rel=1e-10)
    assert rec.states[-1, 3] == pytest.approx(0.082085, abs=1e-6)


def test_record_invariants(quintic_protocol, params):
    rec = integrate(params, X_START, quintic_protocol.schedule)
    assert len(rec.t) == 4001 and rec.t[-1] == 4.0
    assert np.allclose(rec.E, mechanical_energy(params, rec.states.T), rtol=0, atol=0)
    assert rec.tau[0] == 196 and rec.f[0] == 0


def test_final_partial_step_lands_on_t_end():
    rec = integrate(SystemParams(g=0), (0, 1, 0, 0), _zero(1.0005, 2), SimConfig(dt=1e-3))
    assert rec.t[-1] == 1.0005 and rec.t[-2] == pytest.approx(1.0)


def test_integrate_guards():
    with pytest.raises(ValueError):
        integrate(SystemParams(), X_START, _zero(), SimConfig(dt=0.2))
    with pytest.raises(DomainError):
        integrate(SystemParams(), (0, 0, 0, 0), _zero(), SimConfig(dt=0.01))
    with pytest.raises(ValueError):
        SimConfig(dt=0)


def test_abort_carries_partial_record():
    # straight inward pull with no gravity: r reaches zero near t = 1
    p = SystemParams(g=0, B2=0)
    rec_err = None
    with pytest.raises(SimulationAbort) as info:
        integrate(p, (0, 1, 0, -1), _zero(2.0, 3), SimConfig(dt=1e-3))
    rec_err = info.value
    assert rec_err.t_fail == pytest.approx(1.0, abs=2e-3)
    assert rec_err.record.aborted and np.all(rec_err.record.states[:, 1] > 0)


def test_csv_format(tmp_path, quintic_protocol, params):
    rec = integrate(params, X_START, quintic_protocol.schedule)
    path = tmp_path / "rec.csv"
    rec.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_HEADER)
    back = read_record_csv(path)
    assert np.array_equal(back["r"], rec.states[:, 1])
    assert np.array_equal(back["E"], rec.E)


def test_perturb_zero_bounds_is_identity(quintic_protocol):
    s = quintic_protocol.schedule
    out = perturb_schedule(s, NoiseSpec("input", (0.0, 0.0)), seed=3)
    assert np.array_equal(out.tau, s.tau) and np.array_equal(out.f, s.f)


def test_uniform_noise_bounds_and_mean():
    spec = NoiseSpec("input", (30.0, 10.0), distribution="uniform")
    x = noise_samples(spec, 7, 0, 0, 0, 100_000)
    assert np.all(np.abs(x) <= 30)
    sigma = 30 / math.sqrt(3)
    assert abs(x.mean()) < 3 * sigma / math.sqrt(len(x))


def test_truncated_gaussian_moments():
    spec = NoiseSpec("input", (30.0, 10.0))
    x = noise_samples(spec, 1, 0, 0, 0, 100_000)
    assert np.all(np.abs(x) <= 30)
    # sigma = bound / 3, truncation at 3 sigma shrinks the std by ~1.4 %
    assert x.std() == pytest.approx(10.0 * 0.9865, rel=0.02)


def test_seeds_give_different_schedules(quintic_protocol):
    s = quintic_protocol.schedule
    spec = NoiseSpec("input", (30.0, 10.0))
    a = perturb_schedule(s, spec, seed=1)
    b = perturb_schedule(s, spec, seed=2)
    assert np.any(a.tau[:1000] != b.tau[:1000])


def test_held_noise_overlay(quintic_protocol):
    spec = NoiseSpec("input", (30.0, 10.0), sample_period=0.01)
    out = perturb_schedule(quintic_protocol.schedule, spec, seed=4)
    d = out.disturbance
    assert d is not None and d.mode == "piecewise_constant_left"
    assert np.allclose(np.diff(d.times), 0.01)
    assert set(d.times).issubset(set(out.step_breaks))


def test_stream_samples_are_addressable():
    whole = stream_uniforms(5, (1, 2, 0), 0, 50)
    part = stream_uniforms(5, (1, 2, 0), 20, 10)
    assert np.array_equal(whole[20:30], part)
    assert np.all((whole > 0) & (whole < 1))


def test_measurement_noise():
    spec = NoiseSpec("measurement", (math.pi / 3600, 0.005))
    x = (0.3, 2.0, 1.0, 1.0)
    m1 = measure(x, spec, seed=9, sample_index=12)
    assert m1 == measure(x, spec, seed=9, sample_index=12)
    assert abs(m1[0] - 0.3) <= math.pi / 3600 and abs(m1[1] - 2.0) <= 0.005
    assert measure(x, NoiseSpec("measurement", (0, 0)), 9, 12) == (0.3, 2.0)


def test_step_grid_merges_breaks():
    g = step_grid(0.01, 1e-3, [0.0045, 0.002 + 1e-14])
    assert 0.0045 in g and g[-1] == 0.01
    assert np.all(np.diff(g) > 1e-12)
