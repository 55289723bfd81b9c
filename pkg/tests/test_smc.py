from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from formctl.cbt import BLOCKS, build_cbt, transform_dynamics
from formctl.dynamics import FleetParams, RobotParams, RobotState, TorqueInput, assemble_augmented
from formctl.errors import ConfigError, SingularInputError
from formctl.sim import FleetState, integrate_step
from formctl.smc import (
    ControllerGains,
    DesiredTrajectory,
    SineTrack,
    compose_and_recover_torques,
    equivalent_control,
    reaching_control,
    saturate,
    settling_time_bound,
    sliding_surfaces,
)

NOMINAL = ControllerGains(boundary_layer=0.0)


def test_gain_validation():
    with pytest.raises(ConfigError):
        ControllerGains(eps1=0.0)
    with pytest.raises(ConfigError):
        ControllerGains(eps2=1.5)
    with pytest.raises(ConfigError):
        ControllerGains(delta_c=-1.0)
    with pytest.raises(ConfigError):
        ControllerGains(boundary_layer=-0.1)
    ControllerGains(eps1=1.0, boundary_layer=0.0)


def test_reaching_gains_follow_time_scales():
    g = NOMINAL
    assert g.reaching_gain("centroid") == pytest.approx(1.0)
    assert g.reaching_gain("inter") == pytest.approx(10.0)
    assert g.reaching_gain("intra") == pytest.approx(100.0)


def test_surfaces_zero_error():
    tr = build_cbt([3, 3, 3])
    s = sliding_surfaces(np.zeros((9, 2)), np.zeros((9, 2)), tr, NOMINAL)
    assert np.all(s.values == 0)
    assert s.s_s.size == 12 and s.s_r.size == 4 and s.s_c.size == 2


def test_centroid_surface_arithmetic():
    tr = build_cbt([2, 2])
    Ze = np.zeros((4, 2))
    Ze[-1] = (1.0, 2.0)
    s = sliding_surfaces(Ze, np.zeros((4, 2)), tr, NOMINAL)
    np.testing.assert_array_equal(s.s_c, [1.0, 2.0])
    on = sliding_surfaces(Ze, -NOMINAL.c * Ze, tr, NOMINAL)
    np.testing.assert_array_equal(on.s_c, [0.0, 0.0])


def test_surfaces_include_potential_and_lyapunov():
    tr = build_cbt([2, 2])
    F = np.arange(8.0).reshape(4, 2)
    s = sliding_surfaces(np.zeros((4, 2)), np.zeros((4, 2)), tr, NOMINAL, F_pot=F)
    np.testing.assert_array_equal(s.values, F)
    V = s.lyapunov()
    assert V["centroid"] == pytest.approx(0.5 * (36 + 49))
    assert set(V) == set(BLOCKS)


def test_equivalent_control_zero():
    u = equivalent_control("intra", np.zeros(4), np.zeros(8), np.zeros((4, 8)), np.zeros(4), NOMINAL, np.zeros(4))
    np.testing.assert_array_equal(u, 0.0)


def test_equivalent_control_formula(rng):
    P = rng.normal(size=(2, 8))
    R = rng.normal(size=2)
    Zd = rng.normal(size=8)
    ze = rng.normal(size=2)
    acc = rng.normal(size=2)
    rate = rng.normal(size=2)
    g = ControllerGains(c=2.5)
    u = equivalent_control("centroid", ze, Zd, P, R, g, acc, F_pot_rate=rate)
    np.testing.assert_allclose(u, -2.5 * ze - P @ Zd - R + acc + rate)


def test_sine_track_acceleration():
    track = SineTrack(speed=1.0, amplitude=30.0, omega=0.1)
    for t in (0.0, 3.0, 17.5):
        np.testing.assert_allclose(track.acceleration(t), [0.0, -0.3 * math.sin(0.1 * t)], atol=1e-15)
        np.testing.assert_allclose(track.position(t), [t, 30 * math.sin(0.1 * t)])


class _BadTrack(SineTrack):
    def velocity(self, t):
        return np.array([2.0 * self.speed, 0.0])


def test_desired_trajectory_checks_derivatives():
    with pytest.raises(ConfigError):
        DesiredTrajectory(shape=np.zeros((2, 2)), centroid=_BadTrack())


def test_desired_trajectory_at():
    tr = build_cbt([3])
    tri = np.array([[0.0, 0.0], [7.0, 0.0], [3.5, 6.0]])
    des = DesiredTrajectory.from_basis(tr, tri, SineTrack())
    Zd, Zd_dot, Zd_ddot = des.at(2.0)
    np.testing.assert_allclose(Zd[:-1], tr.apply(tri)[:-1])
    np.testing.assert_allclose(Zd[-1], SineTrack().position(2.0))
    assert np.all(Zd_dot[:-1] == 0) and np.all(Zd_ddot[:-1] == 0)


def test_saturate():
    s = np.array([-2.0, -0.05, 0.0, 0.05, 2.0])
    np.testing.assert_array_equal(saturate(s, 0.0), [-1, -1, 0, 1, 1])
    np.testing.assert_allclose(saturate(s, 0.1), [-1, -0.5, 0, 0.5, 1])


def test_reaching_control():
    np.testing.assert_array_equal(reaching_control("intra", np.zeros(4), NOMINAL), 0.0)
    u = reaching_control("intra", np.array([0.3, -0.2]), NOMINAL)
    np.testing.assert_allclose(u, [-100.0, 100.0])
    ratio = reaching_control("intra", np.ones(1), NOMINAL) / reaching_control("centroid", np.ones(1), NOMINAL)
    assert ratio[0] == pytest.approx(100.0)


def test_settling_bounds():
    assert settling_time_bound("centroid", 0.0, NOMINAL) == 0.0
    assert settling_time_bound("centroid", 1.0, NOMINAL) == pytest.approx(2.0)
    assert settling_time_bound("intra", 1.0, NOMINAL) / settling_time_bound("centroid", 1.0, NOMINAL) == pytest.approx(0.01)
    assert settling_time_bound("inter", 4.0, NOMINAL) == pytest.approx(2 * 0.1 * 2.0)
    with pytest.raises(ValueError):
        settling_time_bound("inter", -1.0, NOMINAL)


def _fleet(rng, n):
    states = [RobotState(rng.normal(scale=5, size=2), rng.normal(size=2), float(rng.uniform(-3, 3)), float(rng.normal())) for _ in range(n)]
    params = [RobotParams() for _ in range(n)]
    return states, params


@given(st.integers(0, 2**31))
def test_torque_recovery_round_trip(seed):
    rng = np.random.default_rng(seed)
    tr = build_cbt([3, 2])
    states, params = _fleet(rng, 5)
    aug = assemble_augmented(states, params, [TorqueInput(0, 0)] * 5)
    F = rng.normal(scale=10, size=10)
    U = compose_and_recover_torques(F[:6], F[6:8], F[8:], tr, aug.B)
    np.testing.assert_allclose(tr.stacked() @ aug.B @ U, F, atol=1e-9)


def test_torque_recovery_is_block_local(rng):
    tr = build_cbt([2, 2])
    states, params = _fleet(rng, 4)
    B = assemble_augmented(states, params, [TorqueInput(0, 0)] * 4).B
    F = rng.normal(size=8)
    U = compose_and_recover_torques(F[:4], F[4:6], F[6:], tr, B)
    W = tr.invert(F.reshape(4, 2))
    for i in range(4):
        np.testing.assert_allclose(U[2 * i : 2 * i + 2], np.linalg.solve(B[2 * i : 2 * i + 2, 2 * i : 2 * i + 2], W[i]))


def test_torque_recovery_errors(rng):
    tr = build_cbt([2, 2])
    B = np.eye(8)
    B[4:6, 4:6] = [[1.0, 1.0], [1.0, 1.0]]
    with pytest.raises(SingularInputError) as exc:
        compose_and_recover_torques(np.zeros(4), np.zeros(2), np.zeros(2), tr, B)
    assert exc.value.robot == 2
    with pytest.raises(ConfigError):
        compose_and_recover_torques(np.zeros(4), np.zeros(2), np.zeros(4), tr, B)


def test_zero_control_zero_shape_acceleration():
    tr = build_cbt([2, 2])
    states = [RobotState((float(i), 0.0), (0.0, 0.0), 0.3 * i, 0.0) for i in range(4)]
    aug = assemble_augmented(states, [RobotParams()] * 4, [TorqueInput(0, 0)] * 4)
    U = compose_and_recover_torques(np.zeros(4), np.zeros(2), np.zeros(2), tr, aug.B)
    np.testing.assert_allclose(tr.stacked() @ (aug.B @ U + aug.C), 0.0, atol=1e-14)


def _surface_drift_one_step(h: float) -> float:
    """Apply only the equivalent control for one RK4 step and report how far
    the surfaces move."""
    rng = np.random.default_rng(7)
    tr = build_cbt([3, 2])
    g = ControllerGains()
    n = tr.n
    params = [RobotParams() for _ in range(n)]
    fleet = FleetParams.from_robots(params)
    des = DesiredTrajectory.from_basis(tr, rng.normal(scale=4, size=(n, 2)), SineTrack())
    theta = rng.uniform(-3, 3, n)
    omega = rng.normal(size=n)
    speed = rng.normal(size=n)
    vel = np.column_stack((speed * np.cos(theta), speed * np.sin(theta))) + 0.1 * omega[:, None] * np.column_stack((-np.sin(theta), np.cos(theta)))
    state = FleetState(rng.normal(scale=5, size=(n, 2)), vel, theta, omega)

    def surfaces(st_, t):
        Zd, Zd_dot, _ = des.at(t)
        return sliding_surfaces(tr.apply(st_.positions) - Zd, tr.apply(st_.velocities) - Zd_dot, tr, g).values

    states = [RobotState(p, v, a, b) for p, v, a, b in zip(state.positions, state.velocities, theta, omega)]
    aug = assemble_augmented(states, params, [TorqueInput(0, 0)] * n)
    td = transform_dynamics(tr, aug.A, aug.C)
    Zd, Zd_dot, Zd_ddot = des.at(0.0)
    Z_dot = tr.stacked() @ aug.X_dot
    Ze_dot = (tr.apply(state.velocities) - Zd_dot).ravel()
    parts = []
    for b, P, R in (("intra", td.P_s, td.R_s), ("inter", td.P_r, td.R_r), ("centroid", td.P_c, td.R_c)):
        rows = tr.block(b)
        sl = slice(2 * rows.start, 2 * rows.stop)
        parts.append(equivalent_control(b, Ze_dot[sl], Z_dot, P, R, g, Zd_ddot[rows].ravel()))
    U = compose_and_recover_torques(*parts, tr, aug.B)
    s0 = surfaces(state, 0.0)
    s1 = surfaces(integrate_step(state, U.reshape(n, 2), h, fleet, "rk4"), h)
    return float(np.abs(s1 - s0).max())


def test_equivalent_control_holds_surface():
    d1 = _surface_drift_one_step(1e-2)
    d2 = _surface_drift_one_step(5e-3)
    assert d1 < 1e-2
    # second order: halving h quarters the drift
    assert 3.0 < d1 / d2 < 5.0
