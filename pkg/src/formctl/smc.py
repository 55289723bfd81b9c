"""Three-time-scale sliding mode control in shape coordinates.

Each block (intra shape, inter shape, centroid) gets the surface
``s = slope * Z_e + Z_e_dot``, an equivalent control cancelling the
transformed drift, and a switching term whose gain is stretched by the
perturbation scalars: ``delta_c``, ``delta_r / eps1``, ``delta_s / (eps1 eps2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from formctl.cbt import BLOCKS, CbtTransform
from formctl.errors import ConfigError, SingularInputError

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class ControllerGains:
    """Surface slopes, reaching gains and time-scale parameters.

    ``boundary_layer`` is the saturation width that replaces ``sgn``; zero
    gives the pure discontinuous law.  The ``gamma_*`` margins only matter
    in collision mode.
    """

    s: float = 1.0
    r: float = 1.0
    c: float = 1.0
    delta_s: float = 1.0
    delta_r: float = 1.0
    delta_c: float = 1.0
    eps1: float = 0.1
    eps2: float = 0.1
    boundary_layer: float = 0.1
    gamma_s: float = 0.1
    gamma_r: float = 0.1
    gamma_c: float = 0.1

    def __post_init__(self) -> None:
        for name in ("s", "r", "c", "delta_s", "delta_r", "delta_c", "gamma_s", "gamma_r", "gamma_c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"must be positive, got {value!r}", f"gains.{name}")
        for name in ("eps1", "eps2"):
            value = getattr(self, name)
            if not (0 < value <= 1):
                raise ConfigError(f"must lie in (0, 1], got {value!r}", f"gains.{name}")
        if not np.isfinite(self.boundary_layer) or self.boundary_layer < 0:
            raise ConfigError(
                f"must be >= 0, got {self.boundary_layer!r}", "gains.boundary_layer"
            )

    def slope(self, block: str) -> float:
        return {"intra": self.s, "inter": self.r, "centroid": self.c}[block]

    def delta(self, block: str) -> float:
        return {"intra": self.delta_s, "inter": self.delta_r, "centroid": self.delta_c}[block]

    def gamma(self, block: str) -> float:
        return {"intra": self.gamma_s, "inter": self.gamma_r, "centroid": self.gamma_c}[block]

    def time_scale(self, block: str) -> float:
        """Perturbation factor multiplying the block's time: eps1 eps2, eps1 or 1."""
        return {"intra": self.eps1 * self.eps2, "inter": self.eps1, "centroid": 1.0}[block]

    def reaching_gain(self, block: str) -> float:
        """Magnitude of the switching term actually applied to ``block``."""
        return self.delta(block) / self.time_scale(block)

    def row_slopes(self, transform: CbtTransform) -> FloatArray:
        return _per_row(transform, self.slope)

    def row_reaching_gains(self, transform: CbtTransform) -> FloatArray:
        return _per_row(transform, self.reaching_gain)


def _per_row(transform: CbtTransform, value) -> FloatArray:
    out = np.empty(transform.n)
    for block in BLOCKS:
        out[transform.block(block)] = value(block)
    return out


@dataclass(frozen=True)
class SineTrack:
    """Centroid reference ``origin + [speed t, amplitude sin(omega t)]``."""

    speed: float = 1.0
    amplitude: float = 30.0
    omega: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)

    def position(self, t: float) -> FloatArray:
        return np.array(
            [self.origin[0] + self.speed * t, self.origin[1] + self.amplitude * np.sin(self.omega * t)]
        )

    def velocity(self, t: float) -> FloatArray:
        return np.array([self.speed, self.amplitude * self.omega * np.cos(self.omega * t)])

    def acceleration(self, t: float) -> FloatArray:
        return np.array([0.0, -self.amplitude * self.omega**2 * np.sin(self.omega * t)])


@dataclass(frozen=True, eq=False)
class DesiredTrajectory:
    """Constant intra/inter shape targets plus a moving centroid reference.

    Attributes:
        shape: ``(n - 1, 2)`` desired intra and inter shape vectors.
        centroid: Centroid reference with analytic derivatives.
    """

    shape: FloatArray
    centroid: SineTrack

    @classmethod
    def from_basis(
        cls, transform: CbtTransform, basis: FloatArray, centroid: SineTrack
    ) -> DesiredTrajectory:
        Z = transform.apply(np.asarray(basis, dtype=float).reshape(transform.n, 2))
        return cls(shape=Z[:-1].copy(), centroid=centroid)

    def __post_init__(self) -> None:
        self.check_derivatives()

    def check_derivatives(self, times=(0.0, 1.3, 7.9, 21.4), rtol: float = 1e-6) -> None:
        h = 1e-4
        track = self.centroid
        for t in times:
            for f, df in ((track.position, track.velocity), (track.velocity, track.acceleration)):
                fd = (f(t + h) - f(t - h)) / (2 * h)
                exact = df(t)
                if not np.allclose(fd, exact, rtol=rtol, atol=rtol * (1.0 + np.abs(exact).max())):
                    raise ConfigError(
                        f"trajectory derivative inconsistent at t={t}: {exact} vs finite difference {fd}",
                        "trajectory",
                    )

    def at(self, t: float) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Desired ``(Z_d, Z_d_dot, Z_d_ddot)`` as (n, 2) arrays."""
        k = self.shape.shape[0]
        Zd = np.vstack((self.shape, self.centroid.position(t)))
        Zd_dot = np.zeros((k + 1, 2))
        Zd_dot[-1] = self.centroid.velocity(t)
        Zd_ddot = np.zeros((k + 1, 2))
        Zd_ddot[-1] = self.centroid.acceleration(t)
        return Zd, Zd_dot, Zd_ddot


@dataclass(frozen=True, eq=False)
class SlidingState:
    """Sliding variables for all rows, with block views."""

    values: FloatArray
    transform: CbtTransform

    @property
    def s_s(self) -> FloatArray:
        return self.values[self.transform.intra].ravel()

    @property
    def s_r(self) -> FloatArray:
        return self.values[self.transform.inter].ravel()

    @property
    def s_c(self) -> FloatArray:
        return self.values[self.transform.centroid].ravel()

    def block(self, name: str) -> FloatArray:
        return self.values[self.transform.block(name)].ravel()

    def lyapunov(self) -> dict[str, float]:
        return {b: 0.5 * float(self.block(b) @ self.block(b)) for b in BLOCKS}


def sliding_surfaces(
    Z_e: FloatArray,
    Z_e_dot: FloatArray,
    transform: CbtTransform,
    gains: ControllerGains,
    F_pot: FloatArray | None = None,
) -> SlidingState:
    """Evaluate all three surfaces on (n, 2) error arrays.

    ``F_pot`` is the transformed potential gradient; when given it shifts
    every surface (collision mode).
    """
    Z_e = np.asarray(Z_e, dtype=float).reshape(transform.n, 2)
    Z_e_dot = np.asarray(Z_e_dot, dtype=float).reshape(transform.n, 2)
    values = gains.row_slopes(transform)[:, None] * Z_e + Z_e_dot
    if F_pot is not None:
        values = values + np.asarray(F_pot, dtype=float).reshape(transform.n, 2)
    return SlidingState(values=values, transform=transform)


def equivalent_control(
    block: str,
    Z_e_dot: FloatArray,
    Z_dot: FloatArray,
    P_block: FloatArray,
    R_block: FloatArray,
    gains: ControllerGains,
    Z_ddot_desired: FloatArray,
    F_pot_rate: FloatArray | None = None,
) -> FloatArray:
    """Control that holds ``s_dot = 0`` for one block, on stacked vectors.

    Args:
        block: "intra", "inter" or "centroid".
        Z_e_dot: Stacked error rate of the block.
        Z_dot: Full stacked transformed velocity (length 2n).
        P_block: Rows of ``P`` belonging to the block.
        R_block: Entries of ``R`` belonging to the block.
        gains: Controller gains.
        Z_ddot_desired: Desired second derivative of the block.
        F_pot_rate: Time derivative of the block's transformed potential.
    """
    u = (
        -gains.slope(block) * np.asarray(Z_e_dot, dtype=float)
        - P_block @ np.asarray(Z_dot, dtype=float)
        - R_block
        + Z_ddot_desired
    )
    if F_pot_rate is not None:
        u = u + F_pot_rate
    return u


def saturate(s: FloatArray, width: float) -> FloatArray:
    """``sgn`` (with sgn(0) = 0) or its linear saturation inside ``width``."""
    if width == 0:
        return np.sign(s)
    return np.clip(s / width, -1.0, 1.0)


def reaching_control(block: str, s: FloatArray, gains: ControllerGains) -> FloatArray:
    return -gains.reaching_gain(block) * saturate(np.asarray(s, dtype=float), gains.boundary_layer)


def compose_and_recover_torques(
    u_s: FloatArray,
    u_r: FloatArray,
    f_c: FloatArray,
    transform: CbtTransform,
    B: FloatArray,
    cond_limit: float = 1e12,
) -> FloatArray:
    """Stack the block controls and solve ``Phi B U = F`` for the torques.

    ``B`` is the 2n x 2n block-diagonal input matrix; each 2 x 2 block is
    solved on its own.  Returns the stacked torque vector of length 2n.
    """
    F = np.concatenate([np.ravel(u_s), np.ravel(u_r), np.ravel(f_c)])
    if F.size != 2 * transform.n:
        raise ConfigError(f"block controls have {F.size} entries, expected {2 * transform.n}")
    W = transform.invert(F.reshape(transform.n, 2))
    U = np.empty(2 * transform.n)
    for i in range(transform.n):
        blk = slice(2 * i, 2 * i + 2)
        Bi = B[blk, blk]
        if not np.isfinite(Bi).all() or np.linalg.cond(Bi) > cond_limit:
            raise SingularInputError(i)
        U[blk] = np.linalg.solve(Bi, W[i])
    return U


def settling_time_bound(block: str, V0: float, gains: ControllerGains) -> float:
    """Finite-time reaching bound ``2 sqrt(V0) / gain`` for a block.

    ``V0 = s(0)^T s(0) / 2``; the gain is the block's stretched reaching gain,
    which gives ``2 eps1 sqrt(V0) / delta_r`` and so on.
    """
    if V0 < 0:
        raise ValueError(f"Lyapunov value must be non-negative, got {V0}")
    return 2.0 * np.sqrt(V0) / gains.reaching_gain(block)
