"""Open-loop protocol synthesis by inverse dynamics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .dynamics import SystemParams, gravity_vector, inverse_dynamics_array
from .errors import DomainError, InfeasibleError, NonMonotoneError
from .simulate import InputSchedule
from .trajectories import PolynomialProfile, synchronized_trapezoids

SCHEMA = "protocol-v1"
LABELS = ("sta_quintic", "sta_seventh", "constraint_limited", "time_optimal", "pid", "sta_corrected")

NOMINAL_START = (0.0, 1.0)
NOMINAL_TARGET = (np.pi / 4, 4.0)

# Width of the linear ramp that stands in for an acceleration jump.
_JUMP_RAMP = 1e-9


@dataclass(frozen=True)
class ActuatorBounds:
    tau_max: float = 600.0
    f_max: float = 150.0

    def __post_init__(self):
        if not (self.tau_max > 0 and self.f_max > 0):
            raise ValueError("actuator bounds must be positive")

    def contains(self, tau, f) -> bool:
        return bool(np.all(np.abs(tau) <= self.tau_max) and np.all(np.abs(f) <= self.f_max))


@dataclass(frozen=True)
class KinematicBounds:
    dtheta_max: float = 0.4
    ddtheta_max: float = 0.3
    dr_max: float = 1.5
    ddr_max: float = 1.2

    def __post_init__(self):
        if min(self.dtheta_max, self.ddtheta_max, self.dr_max, self.ddr_max) <= 0:
            raise ValueError("kinematic bounds must be positive")


@dataclass(eq=False)
class Protocol:
    """A synthesized transfer: its input schedule plus what produced it.

    ``schedule`` is None only for zero-duration transfers.
    """

    label: str
    schedule: InputSchedule | None
    t_f: float
    reference: Any = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown protocol label {self.label!r}")
        if self.schedule is not None and abs(self.schedule.t_end - self.t_f) > 1e-12 * max(1.0, self.t_f):
            raise ValueError("schedule end does not match t_f")
        if self.schedule is None and self.t_f != 0:
            raise ValueError("only zero-duration protocols may omit the schedule")

    def peak_inputs(self) -> tuple[float, float]:
        if self.schedule is None:
            return 0.0, 0.0
        return float(np.max(np.abs(self.schedule.tau))), float(np.max(np.abs(self.schedule.f)))

    def to_dict(self) -> dict:
        sched = self.schedule.to_dict() if self.schedule is not None else {"mode": "piecewise_linear", "times": [0.0], "tau": [], "f": []}
        return {
            "schema": SCHEMA,
            "label": self.label,
            "t_f": self.t_f,
            **sched,
            "metadata": self.metadata,
        }

    def to_json(self, path=None, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        text = json.dumps(d, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "Protocol":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"expected schema {SCHEMA!r}, got {d.get('schema')!r}")
        sched = InputSchedule.from_dict(d) if float(d["t_f"]) > 0 else None
        return cls(d["label"], sched, float(d["t_f"]), metadata=d.get("metadata", {}))

    @classmethod
    def from_json(cls, path) -> "Protocol":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _meta(p: SystemParams, **kw) -> dict:
    out = {"params": p.to_dict()}
    for k, v in kw.items():
        out[k] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
    return out


def sample_inputs(p: SystemParams, trajectory, times) -> tuple[np.ndarray, np.ndarray]:
    q, dq, ddq = trajectory.evaluate_array(times)
    if np.any(q[1] <= 0):
        raise DomainError("reference trajectory reaches r <= 0")
    return inverse_dynamics_array(p, q, dq, ddq)


def sta_inputs(p: SystemParams, profile: PolynomialProfile, n_samples: int = 4001) -> Protocol:
    """Inverse-dynamics inputs of a polynomial reference, linearly interpolated."""
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    times = np.linspace(0.0, profile.t_f, n_samples)
    tau, f = sample_inputs(p, profile, times)
    sched = InputSchedule(times, tau, f, "piecewise_linear")
    label = "sta_quintic" if profile.order == "quintic" else "sta_seventh"
    meta = _meta(p, order=profile.order, q0=list(profile.q0), qf=list(profile.qf), n_samples=n_samples)
    return Protocol(label, sched, profile.t_f, reference=profile, metadata=meta)


def peak_sta_inputs(p: SystemParams, profile: PolynomialProfile, n_samples: int = 4001) -> tuple[float, float]:
    tau, f = sample_inputs(p, profile, np.linspace(0.0, profile.t_f, n_samples))
    return float(np.max(np.abs(tau))), float(np.max(np.abs(f)))


def min_feasible_tf(
    p: SystemParams,
    order: str,
    q0=NOMINAL_START,
    qf=NOMINAL_TARGET,
    bounds: ActuatorBounds = ActuatorBounds(),
    tol: float = 1e-3,
    bracket: tuple[float, float] = (0.5, 20.0),
    n_samples: int = 4001,
    scan_points: int = 50,
) -> float:
    """Shortest polynomial-STA duration whose inputs respect ``bounds``.

    Bisection over ``bracket`` after a monotonicity scan; the returned value
    is feasible and (value - tol) is re-checked to be infeasible.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    for q in (q0, qf):
        g = gravity_vector(p, q)
        if not bounds.contains(g.tau, g.f):
            raise InfeasibleError(f"static input at {tuple(q)} exceeds the actuator bounds")

    def feasible(t_f):
        peak_tau, peak_f = peak_sta_inputs(p, PolynomialProfile(order, tuple(q0), tuple(qf), t_f), n_samples)
        return peak_tau <= bounds.tau_max and peak_f <= bounds.f_max

    t_lo, t_hi = bracket
    grid = np.linspace(t_lo, t_hi, scan_points)
    flags = [feasible(t) for t in grid]
    first = next((i for i, ok in enumerate(flags) if ok), None)
    if first is None:
        raise InfeasibleError(f"no feasible duration in [{t_lo}, {t_hi}]")
    if not all(flags[first:]):
        raise NonMonotoneError("feasibility is not monotone over the bracket", list(zip(grid.tolist(), flags)))
    if first == 0:
        return float(t_lo)
    lo, hi = float(grid[first - 1]), float(grid[first])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    if not feasible(hi) or (hi - tol >= t_lo and feasible(hi - tol)):
        raise NonMonotoneError("bracketing certificate failed after bisection", [(hi, True), (hi - tol, False)])
    return hi


def constraint_limited_protocol(
    p: SystemParams,
    q0=NOMINAL_START,
    qf=NOMINAL_TARGET,
    kb: KinematicBounds = KinematicBounds(),
    n_samples: int = 4001,
) -> Protocol:
    """Synchronized bang-off-bang transfer mapped through inverse dynamics.

    Acceleration jumps become ramps of width 1e-9 s in the linear schedule
    and are registered as breakpoints so the integrator never straddles one.
    """
    traj = synchronized_trapezoids(q0, qf, kb.dtheta_max, kb.ddtheta_max, kb.dr_max, kb.ddr_max)
    T = traj.duration
    meta = _meta(p, kinematic_bounds=kb, q0=list(q0), qf=list(qf))
    if T == 0:
        return Protocol("constraint_limited", None, 0.0, reference=traj, metadata=meta)
    jumps = [ts for ts in traj.switch_times if 0 < ts < T]
    ramp_starts = [ts - _JUMP_RAMP for ts in jumps]
    times = np.unique(np.concatenate([np.linspace(0.0, T, n_samples), jumps, ramp_starts]))
    tau, f = sample_inputs(p, traj, times)
    sched = InputSchedule(times, tau, f, "piecewise_linear", breakpoints=tuple(ramp_starts))
    meta["durations"] = {"theta": traj.theta.total_time, "r": traj.r.total_time}
    return Protocol("constraint_limited", sched, T, reference=traj, metadata=meta)
