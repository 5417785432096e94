import math

import mpmath as mp
import numpy as np
import pytest

from stwist.errors import ConfigurationError
from stwist.fields import eval_regularized
from stwist.integrator import SimConfig, integrate, integrate_field
from stwist.perturbations import eval_q, verify_rate_bound
from stwist.scenarios import (PUBLISHED_TABLE1, MotorParams, friction_torque, motor_closed_loop,
                              reference_gains, reproduce_table1, ripple_perturbation)


def test_friction_zero_and_odd():
    m = MotorParams()
    assert friction_torque(0.0, m) == 0.0
    w = np.linspace(-50, 50, 101)
    np.testing.assert_array_equal(friction_torque(-w, m), -friction_torque(w, m))


def test_friction_saturation_against_oracle():
    mp.mp.dps = 40
    m = MotorParams(T_C=0.5, alpha=1000.0, beta=0.01)
    exact = mp.mpf("0.5") * 2 / mp.pi * mp.atan(mp.mpf(1000) * 100) + mp.mpf("0.01") * 100
    value = friction_torque(100.0, m)
    assert value == pytest.approx(float(exact), rel=1e-14)
    assert abs(value - (m.T_C + 100 * m.beta)) <= 1e-3 * (m.T_C + 100 * m.beta)


def test_motor_params_validation():
    with pytest.raises(ConfigurationError) as err:
        MotorParams(alpha=50.0)
    assert err.value.field == "motor.alpha"
    with pytest.raises(ConfigurationError) as err:
        MotorParams(J=0.0)
    assert err.value.field == "motor.J"
    m = MotorParams.from_dict({"J": 2.0}, T=0.5)
    assert m.omega_r == pytest.approx(4 * math.pi)
    with pytest.raises(ConfigurationError) as err:
        MotorParams.from_dict({"inertia": 2.0})
    assert err.value.field == "motor.inertia"


def test_ripple_rate_and_period():
    L = 2.5
    m = MotorParams(J=1.0, omega_r=8 * math.pi)
    p = ripple_perturbation(L, m)
    assert p.period == pytest.approx(0.25)
    res = verify_rate_bound(p)
    assert res.ok and res.max_abs_q == pytest.approx(4 / (3 * math.sqrt(3)) * L, rel=1e-9)
    t = np.linspace(0, 1, 57)
    assert eval_q(p, 0.0) == 0.0
    np.testing.assert_allclose(eval_q(p, t + p.period / 2), -eval_q(p, t), atol=1e-12)
    np.testing.assert_allclose(
        eval_q(p, t), L / 2 * (np.sin(m.omega_r * t) + np.sin(3 * m.omega_r * t)), atol=1e-12)


def test_ripple_physical_amplitudes_scale_with_inertia():
    L, J = 2.5, 3.0
    m = MotorParams(J=J, omega_r=8 * math.pi)
    loop = motor_closed_loop(m, (3.0, 6.0), L, 1e-3)
    L1 = -L * J / (2 * m.omega_r)
    t = 0.1
    expected = L1 * math.cos(m.omega_r * t) + L1 / 3 * math.cos(3 * m.omega_r * t)
    assert loop.torque_disturbance(t) == pytest.approx(expected, rel=1e-14)
    h = 1e-6
    d_dot = (loop.torque_disturbance(t + h) - loop.torque_disturbance(t - h)) / (2 * h)
    assert J * eval_q(loop.perturbation, t) == pytest.approx(d_dot, rel=1e-6)


def test_gain_normalisation():
    loop = motor_closed_loop(MotorParams(J=1.0), (1.0, 2.0), 2.5, 1e-5)
    assert (loop.gains.k1, loop.gains.k2) == (1.0, 2.0)
    loop = motor_closed_loop(MotorParams(J=2.0), (8.24, 0.86), 2.5, 1e-5)
    assert loop.gains.k1 == pytest.approx(4.12)
    with pytest.raises(ConfigurationError):
        motor_closed_loop(MotorParams(), (0.0, 1.0), 2.5, 1e-5)


@pytest.mark.parametrize("J,T_L", [(1.0, 0.0), (2.0, 0.3), (0.05, -1.0)])
def test_composed_field_equals_normalised_field(J, T_L):
    delta = 1e-3
    loop = motor_closed_loop(MotorParams(J=J, T_L=T_L), (1.3 * J, 1.7 * J), 2.5, delta)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        t = rng.uniform(0, 1)
        e = rng.normal() * 10.0 ** rng.uniform(-5, 0)
        z = rng.normal()
        got = loop.normalised_derivative(t, (e, z))
        want = eval_regularized(t, loop.normalise(t, (e, z)), loop.gains, loop.perturbation.q,
                                delta)
        for a, b in zip(got, want):
            worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    assert worst <= 1e-12


def test_motor_trajectory_matches_normalised_run():
    delta, dt, n = 1e-2, 1e-5, 3000
    loop = motor_closed_loop(MotorParams(J=2.0, T_L=0.2), (2.0, 4.0), 2.5, delta)
    e0, z0 = 0.05, 0.01
    phys = integrate_field(loop.field, 0.0, (e0, z0), dt, n)
    x0 = loop.normalise(0.0, (e0, z0))
    norm = integrate(SimConfig(n * dt, x0, delta, dt=dt, record_stride=1), loop.gains,
                     loop.perturbation)
    mapped = np.array([loop.normalise(i * dt, s) for i, s in enumerate(phys)])
    np.testing.assert_allclose(mapped, norm.samples, rtol=0, atol=1e-9)


def test_reference_gains_match_table():
    for T, L, kbar1, kbar2, *_ in PUBLISHED_TABLE1:
        ref = reference_gains(L)
        # the table prints two decimals; agreement to 3 significant figures
        assert round(ref.k1, 2) == kbar1 and round(ref.k2, 2) == kbar2
        assert abs(ref.k1 - kbar1) <= 5e-3 * kbar1
        assert ref.k2 / L == pytest.approx(1.1)


def test_reproduce_single_row():
    (row,) = reproduce_table1(rows=[2])
    assert (row.T, row.L) == (0.25, 2.5)
    assert row.sim_abs_x1 <= row.W1
    assert row.published_sim_abs_x1 <= row.published_gains_W1
    assert row.published_abs_x1 / 3 <= row.published_sim_abs_x1 <= 3 * row.published_abs_x1
    assert len(row.cells()) == len(row.COLUMNS)
