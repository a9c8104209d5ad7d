"""Actuator-bounded minimum-time transfer by direct transcription.

Decision variables are the final time and piecewise-constant (tau, f) on
``n_intervals`` equal intervals, normalized by the actuator bounds so the
box constraints become [-1, 1].  Terminal equality constraints are handled
by an augmented Lagrangian outer loop; each inner problem is solved by
L-BFGS-B with exact gradients from the compiled adjoint in ``_kernels``.

An optional penalty ``smoothness_weight * integral((dtau/dt / tau_max)^2)``
trades a little transfer time for a less aggressive torque waveform.  With
weight 0 the solver returns the pure bang-bang minimum-time protocol.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .dynamics import SystemParams, derivative, gravity_vector
from .errors import ConvergenceError, DomainError, InfeasibleError
from .planners import ActuatorBounds, Protocol, min_feasible_tf, sample_inputs
from .simulate import InputSchedule
from .trajectories import PolynomialProfile

# Relative margin under which a control counts as sitting on its bound.
SATURATION_MARGIN = 1e-3


@dataclass(frozen=True)
class OcpConfig:
    n_intervals: int = 100
    bounds: ActuatorBounds = ActuatorBounds()
    terminal_pos_tol: tuple[float, float] = (1e-4, 1e-4)
    terminal_vel_tol: tuple[float, float] = (1e-4, 1e-4)
    max_outer_iters: int = 12
    penalty_growth: float = 10.0
    seed: int = 0
    substeps: int = 8
    initial_penalty: float = 10.0
    smoothness_weight: float = 0.03
    t_f_bounds: tuple[float, float] = (1e-3, 10.0)
    n_random_starts: int = 0
    inner_max_iters: int = 5000

    def __post_init__(self):
        if self.n_intervals < 40:
            raise ValueError("n_intervals must be at least 40")
        if min(self.terminal_pos_tol + self.terminal_vel_tol) <= 0:
            raise ValueError("terminal tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.substeps < 1 or self.smoothness_weight < 0:
            raise ValueError("invalid substeps or smoothness weight")

    @property
    def tolerances(self) -> np.ndarray:
        return np.array(self.terminal_pos_tol + self.terminal_vel_tol, dtype=float)


@dataclass(eq=False)
class OcpSolution:
    t_f: float
    controls: np.ndarray  # (N, 2) physical units
    states: np.ndarray  # (N + 1, 4) at interval nodes
    kkt_residual: float
    saturation_fraction: tuple[float, float]
    multipliers: np.ndarray
    terminal_residual: np.ndarray
    t_f_history: list = field(default_factory=list)
    start: str = ""
    x0: tuple = ()
    xf: tuple = ()
    params: SystemParams | None = None
    config: OcpConfig | None = None

    @property
    def n_intervals(self) -> int:
        return len(self.controls)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_f, self.n_intervals + 1)

    def torque_variation(self) -> float:
        return float(np.abs(np.diff(self.controls[:, 0])).sum())

    def schedule(self) -> InputSchedule:
        tau = np.append(self.controls[:, 0], self.controls[-1, 0])
        f = np.append(self.controls[:, 1], self.controls[-1, 1])
        return InputSchedule(self.times, tau, f, "piecewise_constant_left")

    def to_protocol(self) -> Protocol:
        meta = {
            "params": self.params.to_dict() if self.params else None,
            "bounds": asdict(self.config.bounds) if self.config else None,
            "n_intervals": self.n_intervals,
            "smoothness_weight": self.config.smoothness_weight if self.config else None,
            "x0": list(self.x0),
            "xf": list(self.xf),
        }
        return Protocol("time_optimal", self.schedule(), self.t_f, metadata=meta)

    def diagnostics(self) -> dict:
        return {
            "kkt_residual": self.kkt_residual,
            "saturation_fraction": list(self.saturation_fraction),
            "t_f_history": list(self.t_f_history),
            "terminal_residual": self.terminal_residual.tolist(),
            "start": self.start,
        }


@dataclass(eq=False)
class CostateTrace:
    times: np.ndarray
    costates: np.ndarray  # (n, 4)
    alpha_tau: np.ndarray
    alpha_f: np.ndarray
    hamiltonian: np.ndarray
    scale: float = 1.0
    sign_consistency: float = float("nan")
    reliable: bool = True

    def switching_times(self, channel: str = "f") -> np.ndarray:
        """Times where the chosen switching function changes sign."""
        a = self.alpha_f if channel == "f" else self.alpha_tau
        s = np.sign(a)
        idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
        # linear interpolation of the zero crossing
        t0, t1 = self.times[idx], self.times[idx + 1]
        a0, a1 = a[idx], a[idx + 1]
        return t0 + (t1 - t0) * a0 / (a0 - a1)


class _Problem:
    """Objective pieces for one (params, endpoints, config) combination."""

    def __init__(self, p: SystemParams, x0, xf, cfg: OcpConfig):
        self.p = p
        self.x0 = np.asarray(x0, dtype=float)
        self.xf = np.asarray(xf, dtype=float)
        self.cfg = cfg
        self.N = cfg.n_intervals
        self.scale = np.array([cfg.bounds.tau_max, cfg.bounds.f_max])

    def shoot(self, z):
        U = z[1:].reshape(self.N, 2) * self.scale
        p = self.p
        return _kernels.shoot(float(z[0]), U, self.x0, self.cfg.substeps, p.m, p.g, p.B1, p.B2)

    def residual_and_jacobian(self, z):
        x, g_tf, gU, _, _ = self.shoot(z)
        J = np.empty((4, z.size))
        J[:, 0] = g_tf
        J[:, 1:] = (gU * self.scale).reshape(4, -1)
        return x - self.xf, J

    def smoothness(self, z):
        w = self.cfg.smoothness_weight
        grad = np.zeros_like(z)
        if w == 0:
            return 0.0, grad
        tau = z[1::2]
        d = np.diff(tau)
        h = z[0] / self.N
        R = w * float(d @ d) / h
        gt = np.zeros(self.N)
        gt[:-1] -= 2 * w * d / h
        gt[1:] += 2 * w * d / h
        grad[0] = -R / z[0]
        grad[1::2] = gt
        return R, grad

    def bounds(self):
        return [tuple(self.cfg.t_f_bounds)] + [(-1.0, 1.0)] * (2 * self.N)

    def solve_from(self, z0):
        cfg = self.cfg
        lam = np.zeros(4)
        mu = cfg.initial_penalty
        z = np.clip(z0, [b[0] for b in self.bounds()], [b[1] for b in self.bounds()])
        history = []
        tol = cfg.tolerances
        c = None
        for _ in range(cfg.max_outer_iters):

            def fun(zz, lam=lam, mu=mu):
                c, J = self.residual_and_jacobian(zz)
                R, gR = self.smoothness(zz)
                val = zz[0] + lam @ c + 0.5 * mu * (c @ c) + R
                grad = J.T @ (lam + mu * c) + gR
                grad[0] += 1.0
                return val, grad

            res = minimize(
                fun,
                z,
                jac=True,
                method="L-BFGS-B",
                bounds=self.bounds(),
                options={"maxiter": cfg.inner_max_iters, "maxfun": 2 * cfg.inner_max_iters, "ftol": 1e-15, "gtol": 1e-10},
            )
            z = res.x
            c, _ = self.residual_and_jacobian(z)
            history.append(float(z[0]))
            lam = lam + mu * c
            if np.all(np.abs(c) <= tol):
                return z, lam, c, history, True
            mu *= cfg.penalty_growth
        return z, lam, c, history, False

    def kkt_residual(self, z, lam):
        """Projected gradient of the Lagrangian (inf-norm)."""
        _, J = self.residual_and_jacobian(z)
        _, gR = self.smoothness(z)
        grad = J.T @ lam + gR
        grad[0] += 1.0
        lo = np.array([b[0] for b in self.bounds()])
        hi = np.array([b[1] for b in self.bounds()])
        proj = np.clip(z - grad, lo, hi) - z
        return float(np.max(np.abs(proj)))


def _initial_guesses(p: SystemParams, x0, xf, cfg: OcpConfig):
    N = cfg.n_intervals
    scale = np.array([cfg.bounds.tau_max, cfg.bounds.f_max])
    mid = (np.arange(N) + 0.5) / N
    guesses = []
    d = np.asarray(xf[:2]) - np.asarray(x0[:2])
    moving = np.any(d != 0)

    if moving:
        try:
            T7 = min_feasible_tf(p, "seventh", tuple(x0[:2]), tuple(xf[:2]), cfg.bounds, tol=1e-2)
        except InfeasibleError:
            T7 = 2.0 * max(1.0, float(np.abs(d).max()))
        prof = PolynomialProfile("seventh", tuple(x0[:2]), tuple(xf[:2]), T7)
        tau, f = sample_inputs(p, prof, mid * T7)
        U = np.clip(np.stack([tau, f], 1) / scale, -1, 1)
        guesses.append(("sta_compressed", np.concatenate([[0.85 * T7], U.ravel()])))

        s = np.where(d >= 0, 1.0, -1.0)
        g_end = np.array(gravity_vector(p, xf[:2])) / scale
        U = np.where(mid[:, None] < 0.5, s, -s)
        guesses.append(("bang", np.concatenate([[0.8 * T7], U.ravel()])))
        U = np.where(mid[:, None] < 0.5, s, np.clip(g_end, -1, 1))
        guesses.append(("bang_hold", np.concatenate([[0.8 * T7], U.ravel()])))
        rng = np.random.default_rng(cfg.seed)
        for k in range(cfg.n_random_starts):
            U = np.clip(guesses[1][1][1:].reshape(N, 2) + rng.uniform(-0.5, 0.5, (N, 2)), -1, 1)
            guesses.append((f"random_{k}", np.concatenate([[0.8 * T7 * rng.uniform(0.9, 1.1)], U.ravel()])))
    g0 = np.clip(np.array(gravity_vector(p, x0[:2])) / scale, -1, 1)
    t_guess = 0.05 if not moving else 1.0
    guesses.append(("static", np.concatenate([[t_guess], np.tile(g0, N)])))
    return guesses


def solve_time_optimal(p: SystemParams, x0, xf, cfg: OcpConfig = OcpConfig()) -> OcpSolution:
    """Minimum-time rest-to-rest transfer under |tau| <= tau_max, |f| <= f_max.

    Runs every initial guess and keeps the shortest converged transfer; among
    results within 1% of it the one with the smallest torque total variation
    wins.  Raises ``ConvergenceError`` if no start meets the tolerances.
    """
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    if np.any(x0[2:] != 0) or np.any(xf[2:] != 0):
        raise DomainError("endpoints must be at rest")
    g = gravity_vector(p, xf[:2])
    if not cfg.bounds.contains(g.tau, g.f):
        raise InfeasibleError("holding the target exceeds the actuator bounds")

    prob = _Problem(p, x0, xf, cfg)
    results = []
    best_fail = None
    for name, z0 in _initial_guesses(p, x0, xf, cfg):
        z, lam, c, hist, ok = prob.solve_from(z0)
        if ok:
            results.append((name, z, lam, c, hist))
        elif best_fail is None or np.max(np.abs(c)) < np.max(np.abs(best_fail[3])):
            best_fail = (name, z, lam, c, hist)
    if not results:
        raise ConvergenceError(
            "no start met the terminal tolerances",
            best=best_fail[1] if best_fail else None,
            residuals=best_fail[3] if best_fail else None,
        )
    t_best = min(r[1][0] for r in results)
    close = [r for r in results if r[1][0] <= 1.01 * t_best]
    name, z, lam, c, hist = min(close, key=lambda r: np.abs(np.diff(r[1][1::2])).sum())

    N = cfg.n_intervals
    U = z[1:].reshape(N, 2) * prob.scale
    _, _, _, nodes, _ = prob.shoot(z)
    lim = prob.scale * (1 - SATURATION_MARGIN)
    sat = tuple(float(np.mean(np.abs(U[:, k]) >= lim[k])) for k in range(2))
    return OcpSolution(
        t_f=float(z[0]),
        controls=U,
        states=nodes,
        kkt_residual=prob.kkt_residual(z, lam),
        saturation_fraction=sat,
        multipliers=lam,
        terminal_residual=c,
        t_f_history=hist,
        start=name,
        x0=tuple(x0),
        xf=tuple(xf),
        params=p,
        config=cfg,
    )


def pmp_diagnostics(p: SystemParams, sol: OcpSolution) -> CostateTrace:
    """Costates, switching functions and control Hamiltonian along ``sol``.

    Costate directions come from the constraint multipliers propagated
    backward by the discrete adjoint; their overall scale is fitted so that
    H = 1 + p.f(x, u) is as close to zero as possible in least squares.
    """
    empty = np.empty(0)
    if sol.t_f <= 0 or sol.n_intervals == 0:
        return CostateTrace(empty, np.empty((0, 4)), empty, empty, empty, reliable=False)
    cfg = sol.config or OcpConfig(n_intervals=max(40, sol.n_intervals))
    U = sol.controls
    _, _, _, nodes, sens = _kernels.shoot(sol.t_f, U, np.asarray(sol.x0, dtype=float), cfg.substeps, p.m, p.g, p.B1, p.B2)
    direction = np.einsum("kij,i->kj", sens, sol.multipliers)
    u_nodes = np.vstack([U, U[-1:]])
    fx = derivative(p, nodes.T, u_nodes[:, 0], u_nodes[:, 1]).T
    h = np.einsum("kj,kj->k", direction, fx)
    hh = float(h @ h)
    reliable = bool(np.all(np.isfinite(direction)) and hh > 0)
    scale = -float(h.sum()) / hh if reliable else float("nan")
    costates = scale * direction
    r = nodes[:, 1]
    alpha_tau = costates[:, 2] / (p.m * r * r)
    alpha_f = costates[:, 3] / p.m
    ham = 1.0 + scale * h

    # Sign rule on saturated intervals: u = +max where alpha < 0 and vice versa.
    lim = np.array([cfg.bounds.tau_max, cfg.bounds.f_max]) * (1 - SATURATION_MARGIN)
    checks = []
    for k, alpha in enumerate((alpha_tau, alpha_f)):
        a_mid = 0.5 * (alpha[:-1] + alpha[1:])
        sat = np.abs(U[:, k]) >= lim[k]
        checks.append(np.sign(U[sat, k]) == -np.sign(a_mid[sat]))
    checks = np.concatenate(checks)
    consistency = float(np.mean(checks)) if checks.size else float("nan")
    return CostateTrace(sol.times, costates, alpha_tau, alpha_f, ham, scale, consistency, reliable)
