"""Boundary-conditioned reference trajectories.

Two families share one evaluator interface (``evaluate`` for a single
time, ``evaluate_array`` for a vector of times):

* ``PolynomialProfile``: smooth rest-to-rest motion q0 + d * sigma(t/t_f)
  with a fixed quintic or seventh-order shape sigma.
* ``TrapezoidTrajectory``: per-axis bang-off-bang acceleration profiles,
  synchronized to a common arrival time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .dynamics import KinPoint
from .errors import DomainError, InfeasibleError

Order = Literal["quintic", "seventh"]

# Ascending powers s^0..s^7.
_SHAPE_COEFFS = {
    "quintic": np.array([0, 0, 0, 10, -15, 6, 0, 0], dtype=float),
    "seventh": np.array([0, 0, 0, 26, -83, 114, -76, 20], dtype=float),
}
_D1 = {k: np.polynomial.polynomial.polyder(c) for k, c in _SHAPE_COEFFS.items()}
_D2 = {k: np.polynomial.polynomial.polyder(c, 2) for k, c in _SHAPE_COEFFS.items()}


def _check_order(order):
    if order not in _SHAPE_COEFFS:
        raise ValueError(f"unknown polynomial order {order!r}")


def shape_eval(order: Order, s):
    """Shape value and its first two s-derivatives.

    Works on scalars and arrays; ``s`` must lie in [0, 1].
    """
    _check_order(order)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1) or np.any(np.isnan(s_arr)):
        raise DomainError(f"normalized time outside [0, 1]: {s}")
    pv = np.polynomial.polynomial.polyval
    out = (pv(s_arr, _SHAPE_COEFFS[order]), pv(s_arr, _D1[order]), pv(s_arr, _D2[order]))
    if s_arr.ndim == 0:
        return tuple(float(v) for v in out)
    return out


@dataclass(frozen=True)
class PolynomialProfile:
    order: Order
    q0: tuple[float, float]
    qf: tuple[float, float]
    t_f: float

    def __post_init__(self):
        _check_order(self.order)
        if not self.t_f > 0:
            raise DomainError(f"t_f must be positive, got {self.t_f}")

    @property
    def displacement(self) -> np.ndarray:
        return np.asarray(self.qf, dtype=float) - np.asarray(self.q0, dtype=float)

    @property
    def duration(self) -> float:
        return self.t_f

    def evaluate(self, t: float) -> KinPoint:
        q, dq, ddq = self.evaluate_array(np.array([t]))
        return KinPoint(tuple(q[:, 0]), tuple(dq[:, 0]), tuple(ddq[:, 0]))

    def evaluate_array(self, t):
        """Position, velocity, acceleration arrays of shape (2, n)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tol = 1e-12 * self.t_f
        if np.any(t < -tol) or np.any(t > self.t_f + tol):
            raise DomainError(f"time outside [0, {self.t_f}]")
        s = np.clip(t / self.t_f, 0.0, 1.0)
        sig, sig1, sig2 = shape_eval(self.order, s)
        d = self.displacement[:, None]
        q0 = np.asarray(self.q0, dtype=float)[:, None]
        return q0 + d * sig, d * sig1 / self.t_f, d * sig2 / self.t_f**2

    def with_duration(self, t_f: float) -> "PolynomialProfile":
        return replace(self, t_f=t_f)


def poly_eval(profile: PolynomialProfile, t: float) -> KinPoint:
    return profile.evaluate(t)


@dataclass(frozen=True)
class TrapezoidProfile:
    """One axis of a bang-off-bang motion.

    Algebra is carried out on |d|; ``sign`` is applied on evaluation.
    ``v_max``/``a_max`` are the configured bounds the profile was built under.
    """

    d: float
    a: float
    v_coast: float
    t_acc: float
    t_coast: float
    t_dec: float
    v_max: float
    a_max: float

    @property
    def total_time(self) -> float:
        return self.t_acc + self.t_coast + self.t_dec

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.d) if self.d != 0 else 0.0

    @property
    def switch_times(self) -> tuple[float, ...]:
        """Times where the acceleration jumps (excluding t = 0)."""
        t1 = self.t_acc
        t2 = self.t_acc + self.t_coast
        return tuple(sorted({t for t in (t1, t2, self.total_time) if t > 0}))

    def distance(self) -> float:
        """Travelled |d| from the phase durations (exact algebra)."""
        v = self.a * self.t_acc
        return 0.5 * v * self.t_acc + self.v_coast * self.t_coast + (v * self.t_dec - 0.5 * self.a * self.t_dec**2)

    def evaluate_array(self, t):
        """Signed (position, velocity, acceleration) relative to the start.

        Phases are closed on the left: the acceleration at a switch time
        belongs to the phase that starts there.  Past the end the axis rests.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a, ta, tc, td = self.a, self.t_acc, self.t_coast, self.t_dec
        v = a * ta
        T = ta + tc + td
        tt = np.clip(t, 0.0, T)
        pos = np.empty_like(tt)
        vel = np.empty_like(tt)
        acc = np.zeros_like(tt)
        p1 = tt < ta
        p2 = (tt >= ta) & (tt < ta + tc)
        p3 = tt >= ta + tc
        pos[p1] = 0.5 * a * tt[p1] ** 2
        vel[p1] = a * tt[p1]
        acc[p1] = a
        x1 = 0.5 * a * ta**2
        pos[p2] = x1 + v * (tt[p2] - ta)
        vel[p2] = v
        u = tt[p3] - ta - tc
        pos[p3] = x1 + v * tc + v * u - 0.5 * a * u**2
        vel[p3] = v - a * u
        acc[p3] = -a
        rest = t >= T
        pos[rest] = abs(self.d)
        vel[rest] = 0.0
        acc[rest & (t > T)] = 0.0
        s = self.sign
        return s * pos, s * vel, s * acc


def trapezoid_min_time(d: float, v_max: float, a_max: float) -> TrapezoidProfile:
    """Fastest accelerate/coast/decelerate profile covering displacement ``d``.

    Falls back to a triangular profile (no coast) when |d| < v_max^2 / a_max.
    """
    if not (v_max > 0 and a_max > 0):
        raise DomainError("velocity and acceleration bounds must be positive")
    dist = abs(d)
    if dist == 0:
        return TrapezoidProfile(d, a_max, 0.0, 0.0, 0.0, 0.0, v_max, a_max)
    if dist >= v_max**2 / a_max:
        t_acc = v_max / a_max
        t_coast = (dist - v_max**2 / a_max) / v_max
        return TrapezoidProfile(d, a_max, v_max, t_acc, t_coast, t_acc, v_max, a_max)
    v_peak = math.sqrt(dist * a_max)
    t_acc = v_peak / a_max
    return TrapezoidProfile(d, a_max, v_peak, t_acc, 0.0, t_acc, v_max, a_max)


def synchronize_profiles(slow: TrapezoidProfile, fast: TrapezoidProfile) -> TrapezoidProfile:
    """Stretch ``fast`` to end with ``slow`` by lowering its coast speed.

    The acceleration magnitude is kept.  Duration as a function of the coast
    speed v is T(v) = v/a + |d|/v, decreasing for v <= sqrt(a|d|); the
    admissible root of v^2 - a T v + a |d| = 0 is taken in its
    cancellation-free form.
    """
    target = slow.total_time
    if not math.isfinite(target):
        raise InfeasibleError("target duration must be finite")
    own = fast.total_time
    if target < own - 1e-12:
        raise InfeasibleError(f"cannot shorten a {own:.6g} s profile to {target:.6g} s")
    if target <= own:
        return fast
    dist = abs(fast.d)
    if dist == 0:
        return replace(fast, v_coast=0.0, t_acc=0.0, t_coast=target, t_dec=0.0)
    a = fast.a
    disc = (a * target) ** 2 - 4 * a * dist
    if disc < 0:
        raise InfeasibleError("no admissible coast speed")
    v = 2 * a * dist / (a * target + math.sqrt(disc))
    t_acc = v / a
    t_coast = target - 2 * t_acc
    return replace(fast, v_coast=v, t_acc=t_acc, t_coast=max(t_coast, 0.0), t_dec=t_acc)


@dataclass(frozen=True)
class TrapezoidTrajectory:
    """Two synchronized bang-off-bang axes starting from ``q0``."""

    q0: tuple[float, float]
    theta: TrapezoidProfile
    r: TrapezoidProfile

    @property
    def duration(self) -> float:
        return max(self.theta.total_time, self.r.total_time)

    @property
    def qf(self) -> tuple[float, float]:
        return (self.q0[0] + self.theta.d, self.q0[1] + self.r.d)

    @property
    def switch_times(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.theta.switch_times) | set(self.r.switch_times)))

    def evaluate_array(self, t):
        pt, vt, at = self.theta.evaluate_array(t)
        pr, vr, ar = self.r.evaluate_array(t)
        q = np.stack([self.q0[0] + pt, self.q0[1] + pr])
        return q, np.stack([vt, vr]), np.stack([at, ar])

    def evaluate(self, t: float) -> KinPoint:
        q, dq, ddq = self.evaluate_array(np.array([t]))
        return KinPoint(tuple(q[:, 0]), tuple(dq[:, 0]), tuple(ddq[:, 0]))


def synchronized_trapezoids(q0, qf, dtheta_max, ddtheta_max, dr_max, ddr_max) -> TrapezoidTrajectory:
    """Minimum-time trapezoids per axis, the faster one stretched to the slower."""
    pt = trapezoid_min_time(qf[0] - q0[0], dtheta_max, ddtheta_max)
    pr = trapezoid_min_time(qf[1] - q0[1], dr_max, ddr_max)
    if pt.total_time >= pr.total_time:
        pr = synchronize_profiles(pt, pr)
    else:
        pt = synchronize_profiles(pr, pt)
    return TrapezoidTrajectory((float(q0[0]), float(q0[1])), pt, pr)
