"""Torque-driven nonholonomic wheeled mobile robot dynamics.

Each robot tracks a point offset by ``d`` from the wheel axis.  Its planar
acceleration is

    p_ddot = A(theta, theta_dot) p_dot + B(theta) [tau_r, tau_l]^T + C(theta, theta_dot)
    J theta_ddot = (R / r) (tau_r - tau_l),      J = I - m d^2

and the n-robot fleet is the block-diagonal stacking of these equations.

Two APIs live here.  The single-robot functions (``eval_matrix_a`` and
friends) follow the matrix form literally and are used as oracles.  The
``fleet_*`` functions evaluate the same terms for all robots at once on
``(n, 2)`` arrays and form the hot path of the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from formctl.errors import ConfigError

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class RobotParams:
    """Physical constants of one differential-drive robot.

    Attributes:
        mass: Body mass ``m`` [kg].
        inertia: Moment of inertia ``I`` [kg m^2].
        wheel_separation: Distance ``R`` between left and right wheels [m].
        wheel_radius: Wheel radius ``r`` [m].
        com_offset: Distance ``d`` from the wheel axis to the centre of mass [m].
    """

    mass: float = 1.0
    inertia: float = 1.0
    wheel_separation: float = 0.4
    wheel_radius: float = 0.1
    com_offset: float = 0.1

    def __post_init__(self) -> None:
        for name in ("mass", "inertia", "wheel_separation", "wheel_radius"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"must be a positive finite number, got {value!r}", name)
        if not np.isfinite(self.com_offset) or self.com_offset == 0:
            raise ConfigError(
                "must be nonzero: det B = -2dR/(mJr^2) vanishes at d = 0 and wheel "
                "torques could not be recovered",
                "com_offset",
            )
        if abs(self.j_eff) < 1e-12:
            raise ConfigError(
                f"effective inertia J = I - m d^2 = {self.j_eff!r} must be nonzero",
                "inertia",
            )

    @property
    def j_eff(self) -> float:
        return self.inertia - self.mass * self.com_offset**2

    @property
    def det_b(self) -> float:
        """Heading-independent determinant of the input matrix."""
        return -2.0 * self.com_offset * self.wheel_separation / (
            self.mass * self.j_eff * self.wheel_radius**2
        )


@dataclass(frozen=True, eq=False)
class RobotState:
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    theta: float = 0.0
    theta_dot: float = 0.0

    def __post_init__(self) -> None:
        values = (*self.position, *self.velocity, self.theta, self.theta_dot)
        if len(values) != 6 or not np.all(np.isfinite(values)):
            raise ConfigError(f"robot state must be six finite numbers, got {values!r}")


@dataclass(frozen=True)
class TorqueInput:
    tau_right: float
    tau_left: float

    def as_array(self) -> FloatArray:
        return np.array([self.tau_right, self.tau_left], dtype=float)


def eval_matrix_a(theta: float, theta_dot: float) -> FloatArray:
    s, c = np.sin(theta), np.cos(theta)
    return theta_dot * np.array([[-s * c, -s * s], [c * c, s * c]])


def eval_matrix_b(theta: float, params: RobotParams) -> FloatArray:
    s, c = np.sin(theta), np.cos(theta)
    m, r = params.mass, params.wheel_radius
    k = params.com_offset * params.wheel_separation / (params.j_eff * r)
    return np.array(
        [
            [c / (m * r) - k * s, c / (m * r) + k * s],
            [s / (m * r) + k * c, s / (m * r) - k * c],
        ]
    )


def eval_vector_c(theta: float, theta_dot: float, params: RobotParams) -> FloatArray:
    return -params.com_offset * theta_dot**2 * np.array([np.cos(theta), np.sin(theta)])


def robot_accel(
    state: RobotState, u: TorqueInput, params: RobotParams
) -> tuple[FloatArray, float]:
    """Return ``(p_ddot, theta_ddot)`` for one robot."""
    a = eval_matrix_a(state.theta, state.theta_dot)
    b = eval_matrix_b(state.theta, params)
    c = eval_vector_c(state.theta, state.theta_dot, params)
    p_ddot = a @ np.asarray(state.velocity, dtype=float) + b @ u.as_array() + c
    theta_ddot = params.wheel_separation / (params.j_eff * params.wheel_radius) * (
        u.tau_right - u.tau_left
    )
    return p_ddot, float(theta_ddot)


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    """Stacked fleet dynamics ``X_ddot = A X_dot + B U + C``.

    ``X``, ``X_dot``, ``C`` and ``U`` are length-2n vectors ordered robot by
    robot; ``A`` and ``B`` are 2n x 2n block-diagonal matrices.
    """

    X: FloatArray
    X_dot: FloatArray
    A: FloatArray
    B: FloatArray
    C: FloatArray
    U: FloatArray

    @property
    def n(self) -> int:
        return self.X.size // 2

    def accel(self) -> FloatArray:
        return self.A @ self.X_dot + self.B @ self.U + self.C


def assemble_augmented(
    states: Sequence[RobotState],
    params: Sequence[RobotParams],
    torques: Sequence[TorqueInput],
) -> AugmentedSystem:
    n = len(states)
    if n < 1 or len(params) != n or len(torques) != n:
        raise ConfigError(
            f"need equally long, non-empty lists; got {n} states, {len(params)} "
            f"parameter sets and {len(torques)} torque inputs"
        )
    A = np.zeros((2 * n, 2 * n))
    B = np.zeros((2 * n, 2 * n))
    C = np.zeros(2 * n)
    for i, (state, p) in enumerate(zip(states, params)):
        blk = slice(2 * i, 2 * i + 2)
        A[blk, blk] = eval_matrix_a(state.theta, state.theta_dot)
        B[blk, blk] = eval_matrix_b(state.theta, p)
        C[blk] = eval_vector_c(state.theta, state.theta_dot, p)
    X = np.array([s.position for s in states], dtype=float).ravel()
    X_dot = np.array([s.velocity for s in states], dtype=float).ravel()
    U = np.array([[u.tau_right, u.tau_left] for u in torques], dtype=float).ravel()
    return AugmentedSystem(X=X, X_dot=X_dot, A=A, B=B, C=C, U=U)


# -- vectorised fleet evaluation -------------------------------------------


@dataclass(frozen=True, eq=False)
class FleetParams:
    """Per-robot constants as arrays of length n."""

    mass: FloatArray
    wheel_separation: FloatArray
    wheel_radius: FloatArray
    com_offset: FloatArray
    j_eff: FloatArray

    @classmethod
    def from_robots(cls, robots: Sequence[RobotParams]) -> FleetParams:
        def col(name: str) -> FloatArray:
            return np.array([getattr(p, name) for p in robots], dtype=float)

        return cls(
            mass=col("mass"),
            wheel_separation=col("wheel_separation"),
            wheel_radius=col("wheel_radius"),
            com_offset=col("com_offset"),
            j_eff=col("j_eff"),
        )

    @property
    def n(self) -> int:
        return self.mass.size

    @property
    def heading_gain(self) -> FloatArray:
        """``R / (J r)``: heading acceleration per unit torque difference."""
        return self.wheel_separation / (self.j_eff * self.wheel_radius)


def fleet_drift(
    velocity: FloatArray, theta: FloatArray, theta_dot: FloatArray, fleet: FleetParams
) -> FloatArray:
    """Torque-free part ``A p_dot + C`` for every robot, shape (n, 2)."""
    s, c = np.sin(theta), np.cos(theta)
    # A p_dot = theta_dot * (c vx + s vy) * [-s, c]
    forward = theta_dot * (c * velocity[:, 0] + s * velocity[:, 1])
    centripetal = -fleet.com_offset * theta_dot**2
    return np.column_stack((-s * forward + centripetal * c, c * forward + centripetal * s))


def fleet_input(theta: FloatArray, torques: FloatArray, fleet: FleetParams) -> FloatArray:
    """``B u`` for every robot; ``torques`` has columns (tau_r, tau_l)."""
    s, c = np.sin(theta), np.cos(theta)
    common = (torques[:, 0] + torques[:, 1]) / (fleet.mass * fleet.wheel_radius)
    diff = fleet.com_offset * fleet.heading_gain * (torques[:, 0] - torques[:, 1])
    return np.column_stack((common * c - diff * s, common * s + diff * c))


def fleet_solve_input(theta: FloatArray, w: FloatArray, fleet: FleetParams) -> FloatArray:
    """Solve ``B u = w`` per robot in closed form; returns (n, 2) torques."""
    s, c = np.sin(theta), np.cos(theta)
    total = fleet.mass * fleet.wheel_radius * (c * w[:, 0] + s * w[:, 1])
    diff = (c * w[:, 1] - s * w[:, 0]) / (fleet.com_offset * fleet.heading_gain)
    return np.column_stack((0.5 * (total + diff), 0.5 * (total - diff)))


def fleet_accel(
    velocity: FloatArray,
    theta: FloatArray,
    theta_dot: FloatArray,
    torques: FloatArray,
    fleet: FleetParams,
) -> tuple[FloatArray, FloatArray]:
    p_ddot = fleet_drift(velocity, theta, theta_dot, fleet) + fleet_input(theta, torques, fleet)
    theta_ddot = fleet.heading_gain * (torques[:, 0] - torques[:, 1])
    return p_ddot, theta_ddot
