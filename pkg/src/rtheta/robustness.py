"""Relative-energy-error metrics and the experiment harnesses built on them."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, NamedTuple

import numpy as np

from .control import PidConfig, pid_run
from .dynamics import SystemParams, inverse_dynamics_array, mechanical_energy
from .errors import DomainError
from .planners import Protocol
from .simulate import NoiseSpec, noise_grid, noise_samples, rk4_batch, step_grid, terminal_states
from .trajectories import PolynomialProfile

# Runs many initial states to t_f: (4, n) -> (terminal states, t_fail).
Runner = Callable[[np.ndarray], tuple]


class ReMetricInputs(NamedTuple):
    E_f: float
    E_delta: float


def re_metric(E_f, E_delta=None):
    """|E_delta - E_f| / |E_f|; accepts a ReMetricInputs or two values (arrays ok)."""
    if E_delta is None:
        E_f, E_delta = E_f
    E_f = np.asarray(E_f, dtype=float)
    if np.any(E_f == 0):
        raise DomainError("relative error undefined for zero reference energy")
    out = np.abs((np.asarray(E_delta, dtype=float) - E_f) / E_f)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GridSpec:
    d_theta: tuple[float, float] = (-np.pi / 1800, np.pi / 1800)
    n_theta: int = 21
    d_r: tuple[float, float] = (-0.01, 0.01)
    n_r: int = 21

    def __post_init__(self):
        for n in (self.n_theta, self.n_r):
            if n < 3 or n % 2 == 0:
                raise ValueError("grid counts must be odd and at least 3")

    def offsets(self) -> np.ndarray:
        """(n_theta * n_r, 2) offsets, theta-major."""
        a = np.linspace(*self.d_theta, self.n_theta)
        b = np.linspace(*self.d_r, self.n_r)
        A, B = np.meshgrid(a, b, indexing="ij")
        return np.stack([A.ravel(), B.ravel()], axis=1)


@dataclass(eq=False)
class RobustnessReport:
    """Per-cell or per-trial RE with the final configurations behind it.

    Aborted runs carry RE = NaN, are listed in ``aborted`` and are left out
    of the MRE.
    """

    label: str
    kind: Literal["grid", "trials"]
    inputs: np.ndarray  # (n, 2) offsets, or (n, 1) trial indices
    re: np.ndarray
    final_states: np.ndarray  # (n, 4)
    E_f: float
    aborted: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def mre(self) -> float:
        ok = np.ones(len(self.re), dtype=bool)
        ok[self.aborted] = False
        return float(np.mean(self.re[ok])) if ok.any() else float("nan")

    def to_dict(self) -> dict:
        cells = []
        for i in range(len(self.re)):
            cells.append(
                {
                    "inputs": self.inputs[i].tolist(),
                    "RE": None if np.isnan(self.re[i]) else float(self.re[i]),
                    "final_state": self.final_states[i].tolist(),
                }
            )
        return {
            "label": self.label,
            "kind": self.kind,
            "spec": self.config,
            "E_f": self.E_f,
            "cells": cells,
            "MRE": self.mre,
            "aborted": list(self.aborted),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.kind == "grid":
                w.writerow(["d_theta", "d_r", "RE"])
                for (a, b), re in zip(self.inputs, self.re):
                    w.writerow([f"{a:.17g}", f"{b:.17g}", f"{re:.17g}"])
            else:
                w.writerow(["trial", "RE", "theta_f", "r_f"])
                for tr, re, x in zip(self.inputs[:, 0], self.re, self.final_states):
                    w.writerow([int(tr), f"{re:.17g}", f"{x[0]:.17g}", f"{x[1]:.17g}"])


def open_loop_runner(p: SystemParams, protocol: Protocol, dt: float = 1e-3) -> Runner:
    if protocol.schedule is None:
        raise ValueError("open-loop runs need a protocol with a schedule")
    return lambda X0: terminal_states(p, X0, protocol.schedule, dt)


def pid_runner(p: SystemParams, reference, cfg: PidConfig = PidConfig(), dt: float = 1e-3) -> Runner:
    return lambda X0: pid_run(p, reference, cfg, X0, dt=dt)


def _report(p, label, kind, inputs, X, t_fail, E_f, config) -> RobustnessReport:
    aborted = [int(i) for i in np.nonzero(~np.isnan(t_fail))[0]]
    re = re_metric(E_f, mechanical_energy(p, X))
    re = np.where(np.isnan(t_fail), re, np.nan)
    return RobustnessReport(label, kind, np.asarray(inputs, dtype=float), re, X.T.copy(), float(E_f), aborted, config)


def initial_error_grid(
    p: SystemParams,
    runner: Runner,
    x_nominal,
    grid: GridSpec = GridSpec(),
    label: str = "",
) -> RobustnessReport:
    """RE over a grid of initial (theta, r) offsets from the rest state ``x_nominal``.

    ``runner`` is either an open-loop protocol runner or a closed-loop one;
    the reference energy is that runner's own unperturbed run.
    """
    x_nominal = np.asarray(x_nominal, dtype=float)
    offsets = grid.offsets()
    X0 = np.repeat(x_nominal[:, None], len(offsets), axis=1)
    X0[:2] += offsets.T
    X_nom, fail_nom = runner(x_nominal[:, None])
    if not np.isnan(fail_nom[0]):
        raise DomainError("the unperturbed run aborts; no reference energy")
    E_f = float(mechanical_energy(p, X_nom)[0])
    X, t_fail = runner(X0)
    config = {"grid": asdict(grid), "x_nominal": x_nominal.tolist(), "params": p.to_dict()}
    return _report(p, label, "grid", offsets, X, t_fail, E_f, config)


def trial_seed(master_seed: int, trial: int) -> tuple[int, int]:
    """Stream identity of one trial: every trial reads its own counter stream."""
    return int(master_seed), int(trial)


def _noisy_input_fn(protocol: Protocol, noise: NoiseSpec, master_seed: int, trials):
    """Batched equivalent of ``perturb_schedule`` for many trials."""
    sched = protocol.schedule
    if noise.sample_period is None:
        knots = sched.times
        draws = np.stack(
            [np.stack([noise_samples(noise, master_seed, int(tr), ch, 0, len(knots)) for tr in trials]) for ch in range(2)]
        )
        tau = sched.tau[None, :] + draws[0]
        f = sched.f[None, :] + draws[1]
        if sched.mode == "piecewise_linear":

            def fn(t, x, left):
                i = int(np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(knots) - 2))
                w = min(max((t - knots[i]) / (knots[i + 1] - knots[i]), 0.0), 1.0)
                return (1 - w) * tau[:, i] + w * tau[:, i + 1], (1 - w) * f[:, i] + w * f[:, i + 1]

        else:

            def fn(t, x, left):
                i = sched._index(t, left)
                return tau[:, i], f[:, i]

        return fn, sched.step_breaks
    grid = noise_grid(sched.t_end, noise.sample_period)
    draws = np.stack(
        [np.stack([noise_samples(noise, master_seed, int(tr), ch, 0, len(grid)) for tr in trials]) for ch in range(2)]
    )

    def fn(t, x, left):
        side = "left" if left else "right"
        i = int(np.clip(np.searchsorted(grid, t, side=side) - 1, 0, len(grid) - 1))
        tau, f = sched.evaluate(t, left)
        return tau + draws[0, :, i], f + draws[1, :, i]

    return fn, np.concatenate([sched.step_breaks, grid])


def _start_state(protocol: Protocol) -> np.ndarray:
    if protocol.reference is not None:
        return np.array([*protocol.reference.q0, 0.0, 0.0], dtype=float)
    if "x0" in protocol.metadata:
        return np.asarray(protocol.metadata["x0"], dtype=float)
    raise ValueError("protocol has no start state; pass x0")


def input_noise_trials(
    p: SystemParams,
    protocol: Protocol,
    n_trials: int,
    noise: NoiseSpec,
    master_seed: int = 0,
    dt: float = 1e-3,
    x0=None,
) -> RobustnessReport:
    """RE of ``n_trials`` runs whose inputs carry seeded additive noise.

    Trial k reproduces ``integrate(p, x0, perturb_schedule(schedule, noise,
    master_seed, k))`` up to floating-point summation order.
    """
    if n_trials < 100:
        raise ValueError("input-noise studies need at least 100 trials")
    if noise.kind != "input":
        raise ValueError("input_noise_trials needs an input NoiseSpec")
    sched = protocol.schedule
    x0 = _start_state(protocol) if x0 is None else np.asarray(x0, dtype=float)
    E_f = float(mechanical_energy(p, terminal_states(p, x0, sched, dt)[0])[0])
    trials = np.arange(n_trials)
    fn, breaks = _noisy_input_fn(protocol, noise, master_seed, trials)
    X, t_fail = rk4_batch(p, np.repeat(x0[:, None], n_trials, axis=1), fn, step_grid(sched.t_end, dt, breaks))
    config = {"noise": noise.to_dict(), "master_seed": master_seed, "n_trials": n_trials, "dt": dt, "params": p.to_dict()}
    return _report(p, protocol.label, "trials", trials[:, None], X, t_fail, E_f, config)


def measurement_noise_trials(
    p: SystemParams,
    reference,
    cfg: PidConfig,
    n_trials: int,
    noise: NoiseSpec,
    master_seed: int = 0,
    dt: float = 1e-3,
    x0=None,
) -> RobustnessReport:
    """PID runs from the nominal start with noisy position feedback."""
    if n_trials < 100:
        raise ValueError("measurement-noise studies need at least 100 trials")
    x0 = np.array([*reference.q0, 0.0, 0.0] if x0 is None else x0, dtype=float)
    X_nom, _ = pid_run(p, reference, cfg, x0, dt=dt)
    E_f = float(mechanical_energy(p, X_nom)[0])
    trials = np.arange(n_trials)
    X, t_fail = pid_run(p, reference, cfg, np.repeat(x0[:, None], n_trials, axis=1), noise, master_seed, trials, dt)
    config = {"noise": noise.to_dict(), "master_seed": master_seed, "n_trials": n_trials, "dt": dt, "pid": asdict(cfg)}
    return _report(p, "pid", "trials", trials[:, None], X, t_fail, E_f, config)


@dataclass(eq=False)
class DissipationMap:
    B1: np.ndarray
    B2: np.ndarray
    re: np.ndarray  # (len(B1), len(B2))
    mode: str
    reference_energy: float
    dt: float

    def rows(self):
        for i, b1 in enumerate(self.B1):
            for j, b2 in enumerate(self.B2):
                yield float(b1), float(b2), float(self.re[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["B1", "B2", "RE"])
            for b1, b2, re in self.rows():
                w.writerow([f"{b1:.17g}", f"{b2:.17g}", f"{re:.17g}"])


def dissipation_scan(
    p_base: SystemParams,
    profile: PolynomialProfile,
    B1_values,
    B2_values,
    mode: Literal["matched", "mismatched"] = "matched",
    dt: float = 1e-3,
    n_samples: int | None = None,
) -> DissipationMap:
    """RE of a polynomial STA across plant damping values.

    matched: the input is re-derived for every (B1, B2) and applied to that
    plant; RE is measured against the exact target energy, so it is the
    pure numerical residual.  mismatched: the input is derived once at
    ``p_base`` and RE is measured against the run on ``p_base``.

    With ``n_samples=None`` inverse dynamics is evaluated at every RK stage
    time; an integer samples it on that many knots and interpolates linearly,
    which adds an O(1/n^2) input error on top of the integrator's.
    """
    if mode not in ("matched", "mismatched"):
        raise ValueError(f"unknown scan mode {mode!r}")
    B1_values = np.asarray(B1_values, dtype=float)
    B2_values = np.asarray(B2_values, dtype=float)
    if len(B1_values) < 5 or len(B2_values) < 5:
        raise ValueError("dissipation scans need at least 5 values per axis")
    if min(B1_values.min(), B2_values.min()) < 0:
        raise ValueError("damping must be non-negative")
    G1, G2 = np.meshgrid(B1_values, B2_values, indexing="ij")
    b1, b2 = G1.ravel(), G2.ravel()
    n = len(b1)
    x0 = np.array([*profile.q0, 0.0, 0.0])
    X0 = np.repeat(x0[:, None], n, axis=1)
    grid = step_grid(profile.t_f, dt)
    # Inverse dynamics is affine in damping: undamped input plus B * velocity.
    undamped = p_base.replace(B1=0.0, B2=0.0)
    if n_samples is None:

        def kin(t):
            q, dq, ddq = profile.evaluate_array(np.atleast_1d(np.clip(t, 0.0, profile.t_f)))
            tau0, f0 = inverse_dynamics_array(undamped, q, dq, ddq)
            return tau0[0], f0[0], dq[0, 0], dq[1, 0]

    else:
        times = np.linspace(0.0, profile.t_f, n_samples)
        q, dq, ddq = profile.evaluate_array(times)
        tau_s, f_s = inverse_dynamics_array(undamped, q, dq, ddq)

        def kin(t):
            return tuple(np.interp(t, times, y) for y in (tau_s, f_s, dq[0], dq[1]))

    def input_for(B1, B2):
        def fn(t, x, left):
            tau0, f0, w, v = kin(t)
            return tau0 + B1 * w, f0 + B2 * v

        return fn

    if mode == "matched":
        X, _ = rk4_batch(p_base, X0, input_for(b1, b2), grid, B1=b1, B2=b2)
        qf = np.asarray(profile.qf)
        E_ref = float(p_base.m * p_base.g * qf[1] * np.sin(qf[0]))
    else:
        fn = input_for(p_base.B1, p_base.B2)
        X_ref, _ = rk4_batch(p_base, x0, fn, grid)
        E_ref = float(mechanical_energy(p_base, X_ref)[0])
        X, _ = rk4_batch(p_base, X0, fn, grid, B1=b1, B2=b2)
    re = re_metric(E_ref, mechanical_energy(p_base, X)).reshape(G1.shape)
    return DissipationMap(B1_values, B2_values, re, mode, E_ref, dt)
