"""Equations of motion of the dissipative r-theta manipulator.

State ordering everywhere is ``(theta, r, dtheta, dr)`` and generalized
input ordering is ``(tau, f)``.  Angles are radians.

    m r^2 theta'' + 2 m r r' theta' + B1 theta' + m g r cos(theta) = tau
    m r''  - m r theta'^2 + B2 r' + m g sin(theta)                = f
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DomainError


@dataclass(frozen=True)
class SystemParams:
    m: float = 20.0
    g: float = 9.8
    B1: float = 100.0
    B2: float = 50.0

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"mass must be positive, got {self.m}")
        if not self.g >= 0:
            raise DomainError(f"gravity must be non-negative, got {self.g}")
        if not (self.B1 >= 0 and self.B2 >= 0):
            raise DomainError(f"damping must be non-negative, got B1={self.B1}, B2={self.B2}")

    def replace(self, **changes) -> "SystemParams":
        return SystemParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


class State(NamedTuple):
    theta: float
    r: float
    dtheta: float = 0.0
    dr: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, x) -> "State":
        return cls(*(float(v) for v in x))


class GenInput(NamedTuple):
    tau: float
    f: float


class KinPoint(NamedTuple):
    """Position, velocity and acceleration of both coordinates."""

    q: tuple[float, float]
    dq: tuple[float, float]
    ddq: tuple[float, float]

    def state(self) -> State:
        return State(self.q[0], self.q[1], self.dq[0], self.dq[1])


def _check_radius(r):
    if not np.all(np.asarray(r) > 0):
        raise DomainError(f"radius must stay positive, got r={r}")


def forward_accel(p: SystemParams, x: State, u: GenInput) -> tuple[float, float]:
    """Accelerations (ddtheta, ddr) of the plant for state ``x`` and input ``u``."""
    theta, r, dtheta, dr = x
    _check_radius(r)
    m, g = p.m, p.g
    ddtheta = (u.tau - 2 * m * r * dr * dtheta - p.B1 * dtheta - m * g * r * math.cos(theta)) / (m * r * r)
    ddr = (u.f + m * r * dtheta**2 - p.B2 * dr - m * g * math.sin(theta)) / m
    if not (math.isfinite(ddtheta) and math.isfinite(ddr)):
        raise DomainError("non-finite acceleration")
    return ddtheta, ddr


def inverse_dynamics(p: SystemParams, k: KinPoint) -> GenInput:
    """Generalized input that realizes the kinematics ``k`` exactly."""
    (theta, r), (dtheta, dr), (ddtheta, ddr) = k
    _check_radius(r)
    m, g = p.m, p.g
    tau = m * r * r * ddtheta + 2 * m * r * dr * dtheta + p.B1 * dtheta + m * g * r * math.cos(theta)
    f = m * ddr - m * r * dtheta**2 + p.B2 * dr + m * g * math.sin(theta)
    return GenInput(tau, f)


def inverse_dynamics_array(p: SystemParams, q, dq, ddq) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse dynamics; ``q``, ``dq``, ``ddq`` have shape (2, n)."""
    theta, r = np.asarray(q, dtype=float)
    dtheta, dr = np.asarray(dq, dtype=float)
    ddtheta, ddr = np.asarray(ddq, dtype=float)
    _check_radius(r)
    m, g = p.m, p.g
    tau = m * r * r * ddtheta + 2 * m * r * dr * dtheta + p.B1 * dtheta + m * g * r * np.cos(theta)
    f = m * ddr - m * r * dtheta**2 + p.B2 * dr + m * g * np.sin(theta)
    return tau, f


def derivative(p: SystemParams, x: np.ndarray, tau, f, B1=None, B2=None) -> np.ndarray:
    """Right-hand side of the first-order system for a stack of states.

    ``x`` has shape (4, ...) and ``tau``/``f`` broadcast against ``x[0]``.
    ``B1``/``B2`` override the damping in ``p`` and may be arrays, which
    lets a whole damping scan run as one batch.
    """
    theta, r, dtheta, dr = x
    m, g = p.m, p.g
    b1 = p.B1 if B1 is None else B1
    b2 = p.B2 if B2 is None else B2
    ddtheta = (tau - 2 * m * r * dr * dtheta - b1 * dtheta - m * g * r * np.cos(theta)) / (m * r * r)
    ddr = (f + m * r * dtheta**2 - b2 * dr - m * g * np.sin(theta)) / m
    return np.stack([dtheta, dr, ddtheta, ddr])


def mechanical_energy(p: SystemParams, x) -> float | np.ndarray:
    """Kinetic plus gravitational energy; accepts a State or a (4, ...) array."""
    theta, r, dtheta, dr = (np.asarray(v, dtype=float) for v in x)
    e = 0.5 * p.m * r * r * dtheta**2 + 0.5 * p.m * dr**2 + p.m * p.g * r * np.sin(theta)
    return float(e) if e.ndim == 0 else e


def kinetic_energy(p: SystemParams, x) -> float | np.ndarray:
    theta, r, dtheta, dr = (np.asarray(v, dtype=float) for v in x)
    e = 0.5 * p.m * r * r * dtheta**2 + 0.5 * p.m * dr**2
    return float(e) if e.ndim == 0 else e


def power_balance(p: SystemParams, x: State, u: GenInput) -> float:
    """Instantaneous dE/dt: input power minus Rayleigh dissipation."""
    _, _, dtheta, dr = x
    return -p.B1 * dtheta**2 - p.B2 * dr**2 + u.tau * dtheta + u.f * dr


def gravity_vector(p: SystemParams, q) -> GenInput:
    """Inputs that hold configuration ``q = (theta, r)`` at rest."""
    theta, r = q
    _check_radius(r)
    return GenInput(p.m * p.g * r * math.cos(theta), p.m * p.g * math.sin(theta))


def linearized_stiffness(p: SystemParams, q_f) -> np.ndarray:
    """Jacobian of the gravity vector at ``q_f``."""
    theta, r = q_f
    _check_radius(r)
    mg = p.m * p.g
    c = mg * math.cos(theta)
    return np.array([[-mg * r * math.sin(theta), c], [c, 0.0]])


def linearized_modes(p: SystemParams, q_f) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and mode shapes of K v = lambda M v about ``q_f``.

    Negative eigenvalues mark directions in which the undamped,
    gravity-balanced equilibrium is unstable.
    """
    r = q_f[1]
    K = linearized_stiffness(p, q_f)
    M = np.diag([p.m * r * r, p.m])
    return scipy.linalg.eigh(K, M)
