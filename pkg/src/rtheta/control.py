"""Feedback tracking and the one-measurement mid-course correction."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .dynamics import SystemParams, mechanical_energy
from .errors import DomainError, SimulationAbort, UndefinedCorrectionError
from .planners import ActuatorBounds, Protocol, sample_inputs
from .simulate import NoiseSpec, SimConfig, _record, noise_samples, rk4_batch, step_grid, terminal_states

AntiWindup = Literal["clamp_integrator", "conditional_integration"]
Feedforward = Literal["none", "nominal_schedule"]
CorrectionMode = Literal["literal_hold", "multiplicative"]

# MRE differences below this count as ties during calibration.
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class PidGains:
    """Per-channel gains, ordered (theta, r)."""

    kp: tuple[float, float] = (2.1e4, 2.1e4)
    ki: tuple[float, float] = (1.5e4, 1.5e4)
    kd: tuple[float, float] = (70.0, 70.0)

    def __post_init__(self):
        if min(self.kp + self.ki + self.kd) < 0:
            raise ValueError("PID gains must be non-negative")


@dataclass(frozen=True)
class PidConfig:
    gains: PidGains = PidGains()
    dt_sample: float = 0.01
    bounds: ActuatorBounds = ActuatorBounds()
    anti_windup: AntiWindup = "clamp_integrator"
    feedforward: Feedforward = "none"

    def __post_init__(self):
        if not self.dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        if self.anti_windup not in ("clamp_integrator", "conditional_integration"):
            raise ValueError(f"unknown anti_windup {self.anti_windup!r}")
        if self.feedforward not in ("none", "nominal_schedule"):
            raise ValueError(f"unknown feedforward {self.feedforward!r}")


def _duration(reference) -> float:
    return float(reference.duration)


def _reference_positions(reference, t):
    T = _duration(reference)
    q, _, _ = reference.evaluate_array(np.clip(np.atleast_1d(t), 0.0, T))
    return q


def pid_run(
    p: SystemParams,
    reference,
    cfg: PidConfig,
    X0,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    trials=None,
    dt: float = 1e-3,
    t_end: float | None = None,
    on_step=None,
):
    """Closed-loop runs for a stack of initial states, shape (4, n).

    ``trials`` gives each column's trial index for the measurement noise
    streams (default 0..n-1).  Returns terminal states and failure times.
    ``on_step(t, X, u, u_pre, e, integral)`` is called after every plant step.
    """
    X = np.array(X0, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if trials is not None and X.shape[1] == 1:
        X = np.repeat(X, len(trials), axis=1)
    n = X.shape[1]
    if np.any(X[1] <= 0):
        raise DomainError("initial radius must be positive")
    trials = np.arange(n) if trials is None else np.asarray(trials)
    T = _duration(reference) if t_end is None else float(t_end)
    dts = cfg.dt_sample
    sample_times = np.arange(0.0, T - 1e-12, dts)
    n_samples = len(sample_times)
    if noise is not None:
        if noise.kind != "measurement":
            raise ValueError("PID noise must be a measurement NoiseSpec")
        meas_noise = np.stack(
            [np.stack([noise_samples(noise, seed, int(tr), ch, 0, n_samples) for tr in trials]) for ch in range(2)]
        )  # (2, n, n_samples)
    kp = np.array(cfg.gains.kp)[:, None]
    ki = np.array(cfg.gains.ki)[:, None]
    kd = np.array(cfg.gains.kd)[:, None]
    lim = np.array([cfg.bounds.tau_max, cfg.bounds.f_max])[:, None]
    q_ref = _reference_positions(reference, sample_times)
    if cfg.feedforward == "nominal_schedule":
        ff = np.array(sample_inputs(p, reference, np.clip(sample_times, 0.0, _duration(reference))))
    else:
        ff = np.zeros((2, n_samples))

    integ = np.zeros((2, n))
    e_prev = None
    t_fail = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    for k, t0 in enumerate(sample_times):
        meas = X[:2].copy()
        if noise is not None:
            meas += meas_noise[:, :, k]
        e = q_ref[:, k : k + 1] - meas
        de = np.zeros_like(e) if e_prev is None else (e - e_prev) / dts
        e_prev = e
        cand = integ + e * dts
        if cfg.anti_windup == "clamp_integrator":
            # ki * I never asks for more than the actuator can deliver
            with np.errstate(divide="ignore"):
                cap = np.where(ki > 0, lim / np.where(ki > 0, ki, 1.0), np.inf)
            integ = np.clip(cand, -cap, cap)
            u_pre = ff[:, k : k + 1] + kp * e + ki * integ + kd * de
        else:
            u_try = ff[:, k : k + 1] + kp * e + ki * cand + kd * de
            freeze = (np.abs(u_try) > lim) & (np.sign(u_try) == np.sign(e))
            integ = np.where(freeze, integ, cand)
            u_pre = ff[:, k : k + 1] + kp * e + ki * integ + kd * de
        u = np.clip(u_pre, -lim, lim)
        t1 = min(t0 + dts, T)
        grid = step_grid(t1 - t0, dt) + t0
        grid[-1] = t1

        def held(t, x, left, u=u):
            return u[0], u[1]

        def stepped(j, Xs, _u, grid=grid, u=u, u_pre=u_pre, e=e, integ=integ):
            if on_step is not None:
                on_step(grid[j], Xs, u, u_pre, e, integ)

        Xn, fail = rk4_batch(p, X, held, grid, on_step=stepped)
        # runs that failed on an earlier sample stay frozen
        Xn[:, ~alive] = X[:, ~alive]
        new_fail = alive & ~np.isnan(fail)
        t_fail[new_fail] = fail[new_fail]
        alive &= ~new_fail
        X = Xn
        if not alive.any():
            break
    return X, t_fail


def pid_track(
    p: SystemParams,
    reference,
    cfg: PidConfig,
    x0,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    trial: int = 0,
    sim: SimConfig = SimConfig(),
    t_end: float | None = None,
):
    """One closed-loop run with a dense record.

    Extra columns hold the pre-clip commands, the sampled errors and the
    integrator state that produced the input applied on each step.
    """
    x0 = np.asarray(x0, dtype=float)
    ts, xs, us = [0.0], [x0.copy()], []
    extra = {"tau_cmd_preclip": [], "f_cmd_preclip": [], "e_theta": [], "e_r": [], "int_theta": [], "int_r": []}

    def on_step(t, X, u, u_pre, e, integ):
        ts.append(float(t))
        xs.append(X[:, 0].copy())
        us.append((float(u[0, 0]), float(u[1, 0])))
        extra["tau_cmd_preclip"].append(float(u_pre[0, 0]))
        extra["f_cmd_preclip"].append(float(u_pre[1, 0]))
        extra["e_theta"].append(float(e[0, 0]))
        extra["e_r"].append(float(e[1, 0]))
        extra["int_theta"].append(float(integ[0, 0]))
        extra["int_r"].append(float(integ[1, 0]))

    _, t_fail = pid_run(p, reference, cfg, x0, noise, seed, [trial], sim.dt, t_end, on_step)
    if not np.isnan(t_fail[0]):
        keep = int(np.searchsorted(ts, t_fail[0]))
        ts, xs = ts[:keep], xs[:keep]
        us = us[: keep - 1]
        extra = {k: v[: keep - 1] for k, v in extra.items()}
    # Last row repeats the last applied command, as in open-loop records.
    us.append(us[-1])
    extra = {k: np.array(v + [v[-1]]) for k, v in extra.items()}
    meta = {"pid": asdict(cfg), "seed": seed, "trial": trial, "noise": noise.to_dict() if noise else None}
    if not np.isnan(t_fail[0]):
        rec = _record(p, ts, xs, us, extra, aborted=True, t_fail=float(t_fail[0]), meta=meta)
        raise SimulationAbort(f"radius left r > 0 at t={t_fail[0]:.6g} s", float(t_fail[0]), rec)
    return _record(p, ts, xs, us, extra, meta=meta)


# ---------------------------------------------------------------- correction


@dataclass(frozen=True)
class CorrectionConfig:
    t_i: float
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.05
    c4: float = 1.0
    c5: float = 0.05
    mode: CorrectionMode = "literal_hold"

    def __post_init__(self):
        if not self.t_i > 0:
            raise ValueError("t_i must be positive")
        if not (self.c1 > 0 and self.c3 > 0 and self.c5 > 0):
            raise ValueError("c1, c3 and c5 must be positive")
        if self.mode not in ("literal_hold", "multiplicative"):
            raise ValueError(f"unknown correction mode {self.mode!r}")

    def constants(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3, self.c4, self.c5])


@dataclass(frozen=True)
class CorrectionWindows:
    """Per-channel windows and factors, each array shaped (2, n)."""

    t_i: float
    error: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    factor1: np.ndarray
    factor2: np.ndarray
    valid: np.ndarray  # (n,)

    def sidecar(self, column: int = 0) -> dict:
        j = column
        return {
            "t_i": self.t_i,
            "e_meas": self.error[:, j].tolist(),
            "t1_theta": float(self.t1[0, j]),
            "t1_r": float(self.t1[1, j]),
            "t2_theta": float(self.t2[0, j]),
            "t2_r": float(self.t2[1, j]),
            "factors": {"stage1": self.factor1[:, j].tolist(), "stage2": self.factor2[:, j].tolist()},
        }


def correction_windows(reference, t_i: float, q_meas, constants, t_f: float) -> CorrectionWindows:
    """Durations and scale factors from one position measurement.

    ``q_meas`` is (2, n); ``constants`` is (5,) or (5, n).  Columns whose
    windows are undefined or run past ``t_f`` are marked invalid.
    """
    q_meas = np.asarray(q_meas, dtype=float).reshape(2, -1)
    c = np.asarray(constants, dtype=float)
    c = c[:, None] if c.ndim == 1 else c
    c1, c2, c3, c4, c5 = c
    q, dq, _ = reference.evaluate_array(np.array([t_i]))
    d = np.asarray(reference.qf, dtype=float) - np.asarray(reference.q0, dtype=float)
    e = q[:, :1] - q_meas
    v = dq[:, :1]
    zero_e = e == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(zero_e, 0.0, np.abs(e / v))
        eps = np.where(zero_e, 0.0, e / d[:, None])
    t2 = t1 / c1
    ok = np.isfinite(t1) & np.isfinite(eps) & ((np.abs(v) >= 1e-9) | zero_e)
    valid = np.all(ok, axis=0) & np.all(t_i + t1 + t2 < t_f, axis=0)
    t1 = np.where(ok, t1, 0.0)
    t2 = np.where(ok, t2, 0.0)
    eps = np.where(ok, eps, 0.0)
    f1 = 1.0 + c2 / (t1 + c3) * eps
    f2 = 1.0 - c4 / (t2 + c5) * eps
    return CorrectionWindows(float(t_i), e, t1, t2, f1, f2, valid)


def _corrected_input(sched, windows: CorrectionWindows, mode: CorrectionMode):
    """Input function applying each channel's two-stage window.

    Expects per-column times (shape (n,)) from a per-column step grid.
    """
    t_i = windows.t_i
    base_hold = np.array(sched.evaluate(t_i))[:, None]
    end1 = t_i + windows.t1
    end2 = end1 + windows.t2

    def fn(t, x, left):
        nominal = np.array(np.broadcast_arrays(*sched.evaluate(t, left)))
        if nominal.ndim == 1:
            nominal = nominal[:, None]
        base = base_hold if mode == "literal_hold" else nominal
        if left:
            in1 = (t > t_i) & (t <= end1)
            in2 = (t > end1) & (t <= end2)
        else:
            in1 = (t >= t_i) & (t < end1)
            in2 = (t >= end1) & (t < end2)
        u = np.where(in1, base * windows.factor1, np.where(in2, base * windows.factor2, nominal))
        return u[0], u[1]

    return fn


def _measure_block(noise, seed, trials, index):
    if noise is None:
        return 0.0
    if noise.kind != "measurement":
        raise ValueError("correction noise must be a measurement NoiseSpec")
    return np.array([[noise_samples(noise, seed, int(tr), ch, index, 1)[0] for tr in trials] for ch in range(2)])


def _check_nominal(nominal: Protocol, t_i: float):
    if nominal.schedule is None or nominal.reference is None:
        raise ValueError("correction needs a protocol with a schedule and a reference trajectory")
    if not 0 < t_i < nominal.t_f:
        raise ValueError("t_i must lie inside (0, t_f)")


def _pre_grid(nominal: Protocol, t_i: float, dt: float) -> np.ndarray:
    pre = step_grid(nominal.t_f, dt, np.concatenate([nominal.schedule.step_breaks, [t_i]]))
    return pre[pre <= t_i + 1e-15]


def _post_grids(nominal: Protocol, windows: CorrectionWindows, dt: float) -> np.ndarray:
    """Per-column step grids from t_i to t_f that land on every window edge."""
    t_i, t_f = windows.t_i, nominal.t_f
    base = step_grid(t_f, dt, np.concatenate([nominal.schedule.step_breaks, [t_i]]))
    base = base[base >= t_i - 1e-15]
    base[0] = t_i
    edges = np.concatenate([t_i + windows.t1, t_i + windows.t1 + windows.t2])  # (4, n)
    edges = np.clip(edges, t_i, t_f)
    n = edges.shape[1]
    # Coincident points only create zero-length steps.
    return np.sort(np.concatenate([np.repeat(base[:, None], n, axis=1), edges]), axis=0)


def correction_states_at(p: SystemParams, nominal: Protocol, X0, t_i: float, dt: float = 1e-3):
    """States at ``t_i`` under the nominal input, shape (4, n)."""
    sched = nominal.schedule
    return rk4_batch(p, X0, lambda t, x, left: sched.evaluate(t, left), _pre_grid(nominal, t_i, dt))


def correct_from(
    p: SystemParams,
    nominal: Protocol,
    X_i,
    t_i: float,
    constants,
    mode: CorrectionMode = "literal_hold",
    q_noise=0.0,
    dt: float = 1e-3,
    on_step=None,
):
    """Batched second half: measure at ``t_i``, apply windows, run to t_f.

    Returns (terminal states, windows, t_fail).
    """
    win = correction_windows(nominal.reference, t_i, X_i[:2] + q_noise, constants, nominal.t_f)
    grids = _post_grids(nominal, win, dt)
    X, fail = rk4_batch(p, X_i, _corrected_input(nominal.schedule, win, mode), grids, on_step=on_step)
    return X, win, fail


def single_shot_correct(
    p: SystemParams,
    nominal: Protocol,
    cfg: CorrectionConfig,
    x0_perturbed,
    meas_noise: NoiseSpec | None = None,
    seed: int = 0,
    trial: int = 0,
    sim: SimConfig = SimConfig(),
):
    """Open-loop run with one measurement at ``cfg.t_i`` and a two-stage fix.

    The record's ``meta["correction"]`` holds the sidecar (measured error,
    window lengths, factors).  Raises ``UndefinedCorrectionError`` if a
    window cannot be computed or does not end before t_f.
    """
    _check_nominal(nominal, cfg.t_i)
    sched = nominal.schedule
    x0 = np.asarray(x0_perturbed, dtype=float)
    ts, xs, us = [0.0], [x0.copy()], []

    def record_step(grid):
        def on_step(k, X, u1):
            ts.append(float(np.ravel(grid[k])[0]))
            xs.append(X[:, 0].copy())
            us.append((float(np.ravel(u1[0])[0]), float(np.ravel(u1[1])[0])))

        return on_step

    def abort(fail, meta=None):
        # drop zero-length padding rows before the failure point
        rec = _record(p, ts[:-1], xs[:-1], us, aborted=True, t_fail=float(fail[0]), meta=meta)
        raise SimulationAbort(f"radius left r > 0 at t={fail[0]:.6g} s", float(fail[0]), rec)

    pre = _pre_grid(nominal, cfg.t_i, sim.dt)
    X, fail = rk4_batch(p, x0, lambda t, x, left: sched.evaluate(t, left), pre, on_step=record_step(pre))
    if not np.isnan(fail[0]):
        abort(fail)
    q_noise = _measure_block(meas_noise, seed, [trial], 0)
    win = correction_windows(nominal.reference, cfg.t_i, X[:2] + q_noise, cfg.constants(), nominal.t_f)
    if not win.valid[0]:
        raise UndefinedCorrectionError(f"correction windows undefined or past t_f: {win.sidecar()}")
    meta = {"correction": {**win.sidecar(), **asdict(cfg)}, "seed": seed, "trial": trial}
    grids = _post_grids(nominal, win, sim.dt)
    fn = _corrected_input(sched, win, cfg.mode)
    X, fail = rk4_batch(p, X, fn, grids, on_step=record_step(grids))
    if not np.isnan(fail[0]):
        abort(fail, meta)
    u_end = fn(np.array([nominal.t_f]), X, True)
    us.append((float(u_end[0][0]), float(u_end[1][0])))
    # zero-length steps from coincident edges leave duplicate rows
    t = np.array(ts)
    keep = np.concatenate([[True], np.diff(t) > 0])
    idx = np.nonzero(keep)[0]
    return _record(p, t[idx], [xs[i] for i in idx], [us[i] for i in idx], meta=meta)


def correction_terminal_states(
    p: SystemParams,
    nominal: Protocol,
    X0,
    cfg: CorrectionConfig,
    meas_noise: NoiseSpec | None = None,
    seed: int = 0,
    trials=None,
    dt: float = 1e-3,
):
    """Terminal states of many corrected runs (no dense record)."""
    _check_nominal(nominal, cfg.t_i)
    X0 = np.asarray(X0, dtype=float)
    X0 = X0[:, None] if X0.ndim == 1 else X0
    trials = np.arange(X0.shape[1]) if trials is None else trials
    X_i, fail_pre = correction_states_at(p, nominal, X0, cfg.t_i, dt)
    q_noise = _measure_block(meas_noise, seed, trials, 0)
    X, win, fail = correct_from(p, nominal, X_i, cfg.t_i, cfg.constants(), cfg.mode, q_noise, dt)
    fail = np.where(np.isnan(fail_pre), fail, fail_pre)
    return X, win, fail


# -------------------------------------------------------------- calibration


def signed_log_grid(magnitudes=(0.3, 1.0, 3.0, 10.0)) -> tuple[float, ...]:
    m = sorted(float(v) for v in magnitudes)
    return tuple([-v for v in reversed(m)] + [0.0] + m)


@dataclass(frozen=True)
class CalibrationGrid:
    t_i_fractions: tuple[float, ...] = (0.1, 0.15, 0.2, 0.25)
    c1_values: tuple[float, ...] = (1.0, 2.0, 4.0)
    c2_values: tuple[float, ...] = signed_log_grid()
    c3_fractions: tuple[float, ...] = (0.01, 0.05, 0.1)
    c4_values: tuple[float, ...] = signed_log_grid()
    c5_fractions: tuple[float, ...] = (0.01, 0.05, 0.1)
    mode: CorrectionMode = "literal_hold"


@dataclass
class CalibrationResult:
    config: CorrectionConfig | None
    mre: float
    baseline_mre: float
    status: str = "ok"  # or "no-improvement"
    n_candidates: int = 0
    n_rejected: int = 0
    per_t_i: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "config": asdict(self.config) if self.config else None,
            "mre": self.mre,
            "baseline_mre": self.baseline_mre,
            "n_candidates": self.n_candidates,
            "n_rejected": self.n_rejected,
            "per_t_i": self.per_t_i,
        }


def _to_constants(z: np.ndarray) -> np.ndarray:
    # search coordinates: logs of the positive constants, raw signed gains
    return np.stack([np.exp(z[..., 0]), z[..., 1], np.exp(z[..., 2]), z[..., 3], np.exp(z[..., 4])], -1)


def _from_constants(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return np.array([np.log(c[0]), c[1], np.log(c[2]), c[3], np.log(c[4])])


def _compass_search(score, c0, best0, max_iters: int, min_step: float = 1e-3):
    """Batched compass search from ``c0``; each iteration scores all 10 axis moves.

    Moves to the best improving neighbour, otherwise halves the step.
    """
    z = _from_constants(c0)
    step = np.array([0.35, 0.25 * max(1.0, abs(z[1])), 0.5, 0.25 * max(1.0, abs(z[3])), 0.5])
    floor = min_step * step
    best = best0
    moves = np.vstack([np.eye(5), -np.eye(5)])
    for _ in range(max_iters):
        if np.all(step < floor):
            break
        cand = z + moves * step
        scores = score(_to_constants(cand))
        k = int(np.argmin(scores))
        if scores[k] < best - _TIE_TOL:
            z, best = cand[k], float(scores[k])
        else:
            step = step / 2
    return _to_constants(z), best


def calibrate_correction(
    p: SystemParams,
    nominal: Protocol,
    errors,
    grid: CalibrationGrid = CalibrationGrid(),
    dt: float = 1e-3,
    chunk: int = 20000,
    refine_iters: int = 0,
) -> CalibrationResult:
    """Exhaustive search of (t_i, c1..c5) minimizing MRE over ``errors``.

    ``errors`` is a sequence of (d_theta, d_r) initial offsets from the
    nominal start.  Candidates whose windows are undefined for any offset,
    or whose runs abort, are rejected.  Ties keep the first candidate in
    grid order, so the result is deterministic.

    With ``refine_iters > 0`` each t_i's grid winner is then polished by a
    deterministic compass search over c1..c5 (at most that many iterations).
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("calibration needs at least one initial error")
    n_cells = len(errors)
    t_f = nominal.t_f
    x_start = np.array([*nominal.reference.q0, 0.0, 0.0], dtype=float)
    X0 = np.repeat(x_start[:, None], n_cells, axis=1)
    X0[:2] += errors.T
    # RE is measured against the protocol's own unperturbed run.
    E_nom = float(mechanical_energy(p, terminal_states(p, x_start, nominal.schedule, dt)[0])[0])
    X_un, _ = terminal_states(p, X0, nominal.schedule, dt)
    baseline = float(np.mean(np.abs(mechanical_energy(p, X_un) - E_nom) / abs(E_nom)))
    per_chunk = max(1, chunk // n_cells)

    def scorer(t_i, X_i, fail_pre):
        def score(combos):
            scores = np.full(len(combos), np.inf)
            for s in range(0, len(combos), per_chunk):
                block = combos[s : s + per_chunk]
                nb = len(block)
                C = np.repeat(block.T, n_cells, axis=1)
                X, win, fail = correct_from(p, nominal, np.tile(X_i, nb), t_i, C, grid.mode, dt=dt)
                re = np.abs(mechanical_energy(p, X) - E_nom) / abs(E_nom)
                bad = ~win.valid | ~np.isnan(fail) | np.tile(~np.isnan(fail_pre), nb)
                scores[s : s + nb] = np.where(bad, np.inf, re).reshape(nb, n_cells).mean(axis=1)
            return scores

        return score

    best = (np.inf, None)
    n_cand = n_rej = 0
    per_t_i = {}
    for frac in grid.t_i_fractions:
        t_i = frac * t_f
        X_i, fail_pre = correction_states_at(p, nominal, X0, t_i, dt)
        combos = np.array(
            list(
                itertools.product(
                    grid.c1_values,
                    grid.c2_values,
                    np.array(grid.c3_fractions) * t_f,
                    grid.c4_values,
                    np.array(grid.c5_fractions) * t_f,
                )
            )
        )
        n_cand += len(combos)
        score = scorer(t_i, X_i, fail_pre)
        scores = score(combos)
        n_rej += int(np.sum(~np.isfinite(scores)))
        # first candidate within the tie tolerance of the minimum
        k = int(np.argmax(scores <= scores.min() + _TIE_TOL))
        c_best, s_best = combos[k], float(scores[k])
        entry = {"grid_mre": s_best, "grid_constants": c_best.tolist()}
        if refine_iters > 0 and np.isfinite(s_best):
            c_best, s_best = _compass_search(score, c_best, s_best, refine_iters)
        entry.update(mre=s_best, constants=c_best.tolist())
        per_t_i[f"{frac:g}"] = entry
        if s_best < best[0] - _TIE_TOL:
            best = (s_best, (t_i, c_best))
    mre, arg = best
    if arg is None or mre > baseline + _TIE_TOL:
        return CalibrationResult(None, mre, baseline, "no-improvement", n_cand, n_rej, per_t_i)
    t_i, c = arg
    cfg = CorrectionConfig(float(t_i), *map(float, c), mode=grid.mode)
    return CalibrationResult(cfg, mre, baseline, "ok", n_cand, n_rej, per_t_i)
