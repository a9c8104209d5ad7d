"""Fixed-step RK4 propagation of the manipulator and seeded noise injection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy.special import ndtr, ndtri

from .dynamics import SystemParams, State, derivative, mechanical_energy
from .errors import DomainError, SimulationAbort

Mode = Literal["piecewise_linear", "piecewise_constant_left"]
CSV_HEADER = ("t", "theta", "r", "dtheta", "dr", "tau", "f", "E")

# Merge tolerance when step grids and breakpoints are unioned.
_GRID_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class InputSchedule:
    """Time-parameterized (tau, f) pair.

    ``breakpoints`` lists times where the integrator must end a step (input
    discontinuities inside a linear schedule).  ``disturbance`` is an
    optional additive schedule held piecewise-constant, used for input noise
    sampled on its own clock.
    """

    times: np.ndarray
    tau: np.ndarray
    f: np.ndarray
    mode: Mode = "piecewise_linear"
    breakpoints: tuple[float, ...] = ()
    disturbance: "InputSchedule | None" = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "f", f)
        if self.mode not in ("piecewise_linear", "piecewise_constant_left"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        if times.ndim != 1 or len(times) < 2 or tau.shape != times.shape or f.shape != times.shape:
            raise ValueError("schedule arrays must be 1-D, equal length and at least 2 long")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("schedule times must start at 0 and increase strictly")
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(f))):
            raise ValueError("schedule values must be finite")

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def step_breaks(self) -> np.ndarray:
        """All times the integrator aligns its steps to."""
        pts = [np.asarray(self.breakpoints, dtype=float)]
        if self.mode == "piecewise_constant_left":
            pts.append(self.times)
        if self.disturbance is not None:
            pts.append(self.disturbance.step_breaks)
        return np.concatenate(pts) if pts else np.empty(0)

    def _index(self, t, left):
        side = "left" if left else "right"
        idx = np.searchsorted(self.times, t, side=side) - 1
        return np.clip(idx, 0, len(self.times) - 1)

    def evaluate(self, t, left: bool = False):
        """(tau, f) at time ``t``; ``left`` selects the left limit at jumps."""
        if self.mode == "piecewise_linear":
            tau = np.interp(t, self.times, self.tau)
            f = np.interp(t, self.times, self.f)
        else:
            i = self._index(t, left)
            tau, f = self.tau[i], self.f[i]
        if self.disturbance is not None:
            dtau, df = self.disturbance.evaluate(t, left)
            tau = tau + dtau
            f = f + df
        return tau, f

    def resample(self, times) -> tuple[np.ndarray, np.ndarray]:
        return self.evaluate(np.asarray(times, dtype=float))

    def with_values(self, tau, f) -> "InputSchedule":
        return replace(self, tau=np.asarray(tau, dtype=float), f=np.asarray(f, dtype=float))

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "times": self.times.tolist(),
            "tau": self.tau.tolist(),
            "f": self.f.tolist(),
        }
        if self.breakpoints:
            out["breakpoints"] = list(self.breakpoints)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "InputSchedule":
        return cls(
            np.asarray(d["times"], dtype=float),
            np.asarray(d["tau"], dtype=float),
            np.asarray(d["f"], dtype=float),
            d.get("mode", "piecewise_linear"),
            tuple(d.get("breakpoints", ())),
        )


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    method: str = "rk4"
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.method != "rk4":
            raise ValueError("only classical RK4 is supported")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class NoiseSpec:
    """Bounded additive noise on two channels.

    ``bounds`` is (tau, f) for input noise and (theta, r) for measurement or
    initial-state noise.  ``sample_period`` (input noise only) draws the
    noise on its own uniform clock and holds it; ``None`` draws one value
    per schedule knot instead.
    """

    kind: Literal["input", "measurement", "initial"]
    bounds: tuple[float, float]
    distribution: Literal["uniform", "truncated_gaussian"] = "truncated_gaussian"
    sigma_fraction: float = 1.0 / 3.0
    sample_period: float | None = None

    def __post_init__(self):
        if self.kind not in ("input", "measurement", "initial"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.distribution not in ("uniform", "truncated_gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if min(self.bounds) < 0:
            raise ValueError("noise bounds must be non-negative")
        if not 0 < self.sigma_fraction <= 1:
            raise ValueError("sigma_fraction must lie in (0, 1]")
        if self.sample_period is not None and not self.sample_period > 0:
            raise ValueError("sample_period must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bounds": list(self.bounds),
            "distribution": self.distribution,
            "sigma_fraction": self.sigma_fraction,
            "sample_period": self.sample_period,
        }


# Stream tags so input/measurement/initial draws never share a stream.
_KIND_TAG = {"input": 1, "measurement": 2, "initial": 3}


def _stream_key(seed: int, *ids: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in ids))
    return ss.generate_state(2, dtype=np.uint64)


def stream_uniforms(seed: int, ids: tuple[int, ...], start: int, count: int) -> np.ndarray:
    """Open-interval uniforms for samples ``start .. start+count-1`` of a stream.

    Sample i is the first word of Philox block i under a key derived from
    ``(seed, *ids)``, so any sample can be regenerated on its own.
    """
    bg = np.random.Philox(key=_stream_key(seed, *ids), counter=np.array([start, 0, 0, 0], dtype=np.uint64))
    raw = bg.random_raw(4 * count)[::4]
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


def bounded_noise(u: np.ndarray, bound: float, spec: NoiseSpec) -> np.ndarray:
    """Map open-interval uniforms to the noise distribution on [-bound, bound]."""
    if bound == 0:
        return np.zeros_like(u)
    if spec.distribution == "uniform":
        return bound * (2.0 * u - 1.0)
    sigma = spec.sigma_fraction * bound
    lo = ndtr(-bound / sigma)
    hi = ndtr(bound / sigma)
    return np.clip(sigma * ndtri(lo + u * (hi - lo)), -bound, bound)


def noise_samples(spec: NoiseSpec, seed: int, trial: int, channel: int, start: int, count: int) -> np.ndarray:
    u = stream_uniforms(seed, (_KIND_TAG[spec.kind], trial, channel), start, count)
    return bounded_noise(u, spec.bounds[channel], spec)


def perturb_schedule(sched: InputSchedule, spec: NoiseSpec, seed: int, trial: int = 0) -> InputSchedule:
    """Schedule with seeded additive input noise.

    Without ``spec.sample_period`` every knot gets its own draw; with it the
    noise lives on a uniform clock of that period and is held in between.
    """
    if spec.kind != "input":
        raise ValueError("perturb_schedule needs an input NoiseSpec")
    if spec.sample_period is None:
        n = len(sched.times)
        dtau = noise_samples(spec, seed, trial, 0, 0, n)
        df = noise_samples(spec, seed, trial, 1, 0, n)
        return sched.with_values(sched.tau + dtau, sched.f + df)
    grid = noise_grid(sched.t_end, spec.sample_period)
    n = len(grid)
    dtau = noise_samples(spec, seed, trial, 0, 0, n)
    df = noise_samples(spec, seed, trial, 1, 0, n)
    overlay = InputSchedule(grid, dtau, df, "piecewise_constant_left")
    return replace(sched, disturbance=overlay)


def noise_grid(t_end: float, period: float) -> np.ndarray:
    grid = np.arange(0.0, t_end, period)
    if t_end - grid[-1] > _GRID_EPS:
        grid = np.append(grid, t_end)
    else:
        grid[-1] = t_end
    if len(grid) < 2:
        grid = np.array([0.0, t_end])
    return grid


def measure(x, spec: NoiseSpec, seed: int, sample_index: int, trial: int = 0) -> tuple[float, float]:
    """Noisy (theta, r) read-back; velocities are not measured."""
    if spec.kind != "measurement":
        raise ValueError("measure needs a measurement NoiseSpec")
    d_theta = noise_samples(spec, seed, trial, 0, sample_index, 1)[0]
    d_r = noise_samples(spec, seed, trial, 1, sample_index, 1)[0]
    return x[0] + d_theta, x[1] + d_r


def measurement_block(spec: NoiseSpec, seed: int, trials, sample_index: int) -> np.ndarray:
    """Measurement noise for many trials at one sample, shape (2, n_trials)."""
    out = np.empty((2, len(trials)))
    for j, trial in enumerate(trials):
        out[0, j] = noise_samples(spec, seed, trial, 0, sample_index, 1)[0]
        out[1, j] = noise_samples(spec, seed, trial, 1, sample_index, 1)[0]
    return out


def step_grid(t_end: float, dt: float, breaks=()) -> np.ndarray:
    """Step boundaries: a uniform dt grid merged with ``breaks``, ending at t_end."""
    n = int(np.floor(t_end / dt + 1e-9))
    base = np.arange(n + 1) * dt
    pts = np.concatenate([base, np.asarray(breaks, dtype=float), [t_end]])
    pts = np.unique(pts[(pts >= 0) & (pts <= t_end)])
    keep = np.concatenate([[True], np.diff(pts) > _GRID_EPS])
    pts = pts[keep]
    pts[-1] = t_end
    return pts


InputFn = Callable[[float, np.ndarray, bool], tuple]


def rk4_batch(p: SystemParams, X0, input_fn: InputFn, grid, B1=None, B2=None, on_step=None):
    """Propagate a stack of states (shape (4, n)) across ``grid``.

    ``grid`` is shared (1-D) or per column (shape (K + 1, n)); per-column
    grids may end in zero-length padding steps.  ``input_fn(t, x, left)``
    returns (tau, f) broadcastable to n, with ``t`` a scalar or an (n,)
    array matching the grid; ``left`` is True only for the stage evaluated
    at a step's right end.  Runs that reach r <= 0 (or non-finite values)
    are frozen at their last valid state and reported through the returned
    ``t_fail`` (NaN if none).
    """
    X = np.array(X0, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    grid = np.asarray(grid, dtype=float)
    n = X.shape[1]
    t_fail = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    # blow-ups are caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(len(grid) - 1):
            t0 = grid[k]
            t1 = grid[k + 1]
            h = t1 - t0
            tm = t0 + 0.5 * h
            u1 = input_fn(t0, X, False)
            k1 = derivative(p, X, *u1, B1=B1, B2=B2)
            Y = X + 0.5 * h * k1
            um = input_fn(tm, Y, False)
            k2 = derivative(p, Y, *um, B1=B1, B2=B2)
            Y = X + 0.5 * h * k2
            k3 = derivative(p, Y, *input_fn(tm, Y, False), B1=B1, B2=B2)
            Y = X + h * k3
            k4 = derivative(p, Y, *input_fn(t1, Y, True), B1=B1, B2=B2)
            Xn = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            bad = alive & ~((Xn[1] > 0) & np.all(np.isfinite(Xn), axis=0))
            if bad.any():
                t_fail[bad] = (t1 if np.ndim(t1) == 0 else t1[bad])
                alive &= ~bad
                Xn[:, ~alive] = X[:, ~alive]
            X = Xn
            if on_step is not None:
                on_step(k + 1, X, u1)
            if not alive.any():
                break
    return X, t_fail


def column_grids(grids) -> np.ndarray:
    """Stack step grids of unequal length into shape (K + 1, n).

    Shorter grids are padded with their end time (zero-length steps).
    """
    K = max(len(g) for g in grids)
    out = np.empty((K, len(grids)))
    for j, g in enumerate(grids):
        out[: len(g), j] = g
        out[len(g) :, j] = g[-1]
    return out


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Dense samples of one simulated run (one row per integration step)."""

    t: np.ndarray
    states: np.ndarray  # (n, 4)
    tau: np.ndarray
    f: np.ndarray
    E: np.ndarray
    extra: dict = field(default_factory=dict)
    aborted: bool = False
    t_fail: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def terminal_state(self) -> State:
        return State.from_array(self.states[-1])

    @property
    def terminal_energy(self) -> float:
        return float(self.E[-1])

    def columns(self) -> dict:
        cols = {
            "t": self.t,
            "theta": self.states[:, 0],
            "r": self.states[:, 1],
            "dtheta": self.states[:, 2],
            "dr": self.states[:, 3],
            "tau": self.tau,
            "f": self.f,
            "E": self.E,
        }
        cols.update(self.extra)
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow([f"{v:.17g}" for v in row])


def read_record_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


def _record(p, ts, xs, us, extra=None, aborted=False, t_fail=None, meta=None) -> TrajectoryRecord:
    states = np.array(xs)
    u = np.array(us)
    return TrajectoryRecord(
        t=np.array(ts),
        states=states,
        tau=u[:, 0],
        f=u[:, 1],
        E=mechanical_energy(p, states.T),
        extra=extra or {},
        aborted=aborted,
        t_fail=t_fail,
        meta=meta or {},
    )


def integrate(p: SystemParams, x0, sched: InputSchedule, cfg: SimConfig = SimConfig()) -> TrajectoryRecord:
    """Propagate one run under ``sched`` and record every step.

    Steps are ``cfg.dt`` long except where they are cut to land on schedule
    discontinuities and on ``sched.t_end``.  Raises ``SimulationAbort`` if
    the radius reaches zero; the exception carries the partial record.
    """
    t_end = sched.t_end
    if not t_end > 0:
        raise DomainError("schedule must have positive duration")
    if cfg.dt > t_end / 10:
        raise ValueError(f"dt={cfg.dt} too coarse for a {t_end} s schedule (need dt <= t_end/10)")
    x0 = np.asarray(x0, dtype=float)
    if not x0[1] > 0:
        raise DomainError("initial radius must be positive")
    grid = step_grid(t_end, cfg.dt, sched.step_breaks)
    ts, xs, us = [0.0], [x0.copy()], []

    def fn(t, x, left):
        return sched.evaluate(t, left)

    def on_step(k, X, u1):
        us.append((float(u1[0]), float(u1[1])))
        ts.append(grid[k])
        xs.append(X[:, 0].copy())

    X, t_fail = rk4_batch(p, x0, fn, grid, on_step=on_step)
    if np.isnan(t_fail[0]):
        us.append(tuple(float(v) for v in sched.evaluate(t_end, True)))
        return _record(p, ts, xs, us)
    # The failing step wrote a frozen duplicate of the last valid state.
    rec = _record(p, ts[:-1], xs[:-1], us, aborted=True, t_fail=float(t_fail[0]))
    raise SimulationAbort(f"radius left r > 0 at t={t_fail[0]:.6g} s", float(t_fail[0]), rec)


def terminal_states(p: SystemParams, X0, sched: InputSchedule, dt: float = 1e-3, B1=None, B2=None):
    """Terminal states of many runs sharing one schedule (no dense record)."""
    grid = step_grid(sched.t_end, dt, sched.step_breaks)
    return rk4_batch(p, X0, lambda t, x, left: sched.evaluate(t, left), grid, B1=B1, B2=B2)
