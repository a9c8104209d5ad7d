import numpy as np
import pytest

from rtheta.dynamics import (
    GenInput,
    KinPoint,
    State,
    SystemParams,
    derivative,
    forward_accel,
    gravity_vector,
    inverse_dynamics,
    kinetic_energy,
    linearized_modes,
    linearized_stiffness,
    mechanical_energy,
    power_balance,
)
from rtheta.errors import DomainError

from conftest import E_TARGET

P = SystemParams()


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(m=0)
    with pytest.raises(ValueError):
        SystemParams(g=-1)
    with pytest.raises(ValueError):
        SystemParams(B1=-1)
    assert P.replace(B1=0).B1 == 0 and P.B1 == 100


@pytest.mark.parametrize(
    "x, u, expected",
    [
        (State(0, 1), GenInput(196, 0), (0.0, 0.0)),
        (State(0, 1), GenInput(0, 0), (-9.8, 0.0)),
        (State(0, 2, 1, 0), GenInput(0, 0), (-6.15, 2.0)),
    ],
)
def test_forward_accel_examples(x, u, expected):
    assert forward_accel(P, x, u) == pytest.approx(expected, abs=1e-12)


def test_forward_accel_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        forward_accel(P, State(0, 0), GenInput(0, 0))
    with pytest.raises(DomainError):
        forward_accel(P, State(0, 1), GenInput(np.inf, 0))


def test_inverse_dynamics_endpoints():
    assert inverse_dynamics(P, KinPoint((0, 1), (0, 0), (0, 0))) == pytest.approx((196, 0), abs=1e-12)
    tau, f = inverse_dynamics(P, KinPoint((np.pi / 4, 4), (0, 0), (0, 0)))
    assert tau == pytest.approx(784 / np.sqrt(2), rel=1e-14)
    assert f == pytest.approx(196 / np.sqrt(2), rel=1e-14)
    assert tau == pytest.approx(554.372, abs=1e-3) and f == pytest.approx(138.593, abs=1e-3)


def test_energy_examples():
    assert mechanical_energy(P, State(0, 1)) == 0
    assert mechanical_energy(P, State(np.pi / 4, 4)) == pytest.approx(E_TARGET, rel=1e-14)
    assert mechanical_energy(P, State(0, 1, 0, 1)) == pytest.approx(10.0)
    assert kinetic_energy(P, State(0, 1, 0, 1)) == pytest.approx(10.0)


@pytest.mark.parametrize(
    "x, u, expected",
    [
        (State(0.3, 2), GenInput(50, 7), 0.0),
        (State(0, 1, 1, 0), GenInput(100, 0), 0.0),
        (State(0, 1, 0, 2), GenInput(0, 10), -180.0),
    ],
)
def test_power_balance_examples(x, u, expected):
    assert power_balance(P, x, u) == pytest.approx(expected, abs=1e-12)


def test_gravity_vector_examples():
    assert gravity_vector(P, (0, 1)) == pytest.approx((196, 0))
    g = gravity_vector(P, (np.pi / 2, 3))
    assert g.tau == pytest.approx(0, abs=1e-12) and g.f == pytest.approx(P.m * P.g)
    assert gravity_vector(P, (np.pi / 4, 4)) == pytest.approx((554.372, 138.593), abs=1e-3)


def test_equilibrium_is_exact():
    for q in [(0.0, 1.0), (np.pi / 4, 4.0), (-1.2, 0.3)]:
        assert tuple(forward_accel(P, State(*q), gravity_vector(P, q))) == (0.0, 0.0)


def test_linearized_stiffness():
    assert np.allclose(linearized_stiffness(P, (0, 1)), [[0, 196], [196, 0]])
    K = linearized_stiffness(P, (np.pi / 4, 4))
    assert np.allclose(K, [[-554.372, 138.593], [138.593, 0]], atol=1e-3)
    assert K[0, 1] == K[1, 0]


def test_linearized_modes_solve_generalized_problem():
    w2, V = linearized_modes(P, (np.pi / 4, 4))
    K = linearized_stiffness(P, (np.pi / 4, 4))
    M = np.diag([P.m * 16, P.m])
    for k in range(2):
        assert np.allclose(K @ V[:, k], w2[k] * M @ V[:, k])


def test_derivative_accepts_damping_arrays():
    x = np.array([[0.1, 0.1], [2.0, 2.0], [0.5, 0.5], [-0.2, -0.2]])
    d = derivative(P, x, 10.0, 3.0, B1=np.array([0.0, 100.0]), B2=np.array([0.0, 50.0]))
    ref = derivative(P, x[:, 1], 10.0, 3.0)
    assert np.allclose(d[:, 1], ref)
    assert d[2, 0] > d[2, 1]
