"""Gaussian-bump repulsion between robots and its image in shape coordinates.

Each pair within the sensing radius contributes the repulsive vector

    V_ij = (p_i - p_j) * b * exp(-|p_i - p_j|^2 / c)

which is ``-(c/2)`` times the gradient of the scalar bump
``b exp(-|p_i - p_j|^2 / c)`` with respect to ``p_i``.  The avoidance input of
robot i is the sum of its ``V_ij``.

Sign convention: the potential gradient is ``grad F = -(avoidance inputs)``,
so the closed loop pushes robots along ``-grad F``.  The transformed
potential ``F_pot = Phi grad F`` is what shifts the sliding surfaces.

A C1 taper over ``[0.9 r_sense, r_sense]`` switches pairs off smoothly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from formctl.cbt import BLOCKS, CbtTransform
from formctl.errors import ConfigError
from formctl.smc import ControllerGains

FloatArray = NDArray[np.float64]

TAPER_START = 0.9


@dataclass(frozen=True)
class PotentialParams:
    """Repulsion parameters.

    Attributes:
        amplitude: ``b``.
        length_scale: ``c`` [m^2].
        sensing_radius: Pairs farther apart than this do not interact [m].
        approach_speed: Per-robot speed used to estimate the rate bound [m/s].
        bound: Known bounds on ``|dF_pot/dt|`` for (intra, inter, centroid);
            estimated numerically when None.
    """

    amplitude: float = 5.0
    length_scale: float = 2.0
    sensing_radius: float = 3.0
    approach_speed: float = 2.0
    bound: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        for name in ("amplitude", "length_scale", "sensing_radius", "approach_speed"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"must be positive, got {value!r}", f"potential.{name}")
        if self.bound is not None:
            if len(self.bound) != 3 or any(not np.isfinite(v) or v < 0 for v in self.bound):
                raise ConfigError(
                    f"must be three non-negative numbers, got {self.bound!r}", "potential.bound"
                )
            object.__setattr__(self, "bound", tuple(float(v) for v in self.bound))


def bump(p_i: FloatArray, p_j: FloatArray, params: PotentialParams) -> float:
    """Scalar potential ``b exp(-|p_i - p_j|^2 / c)``."""
    d = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    return float(params.amplitude * np.exp(-(d @ d) / params.length_scale))


def pair_repulsion(p_i: FloatArray, p_j: FloatArray, params: PotentialParams) -> FloatArray:
    d = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    return d * params.amplitude * np.exp(-(d @ d) / params.length_scale)


def sensing_weight(rho: FloatArray, params: PotentialParams) -> tuple[FloatArray, FloatArray]:
    """Taper weight and its derivative with respect to distance."""
    rho = np.asarray(rho, dtype=float)
    r = params.sensing_radius
    width = (1.0 - TAPER_START) * r
    u = np.clip((rho - TAPER_START * r) / width, 0.0, 1.0)
    w = 1.0 - u * u * (3.0 - 2.0 * u)
    dw = -6.0 * u * (1.0 - u) / width
    return w, dw


def _pair_terms(positions: FloatArray, params: PotentialParams):
    P = np.asarray(positions, dtype=float)
    diff = P[:, None, :] - P[None, :, :]
    rho = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    w, dw = sensing_weight(rho, params)
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(dw, 0.0)
    g = params.amplitude * np.exp(-(rho * rho) / params.length_scale)
    return diff, rho, w, dw, g


def avoidance_inputs(positions: FloatArray, params: PotentialParams) -> FloatArray:
    """Tapered repulsion summed over neighbours for every robot, shape (n, 2).

    Summation runs over ascending neighbour index.
    """
    diff, _, w, _, g = _pair_terms(positions, params)
    return np.sum((w * g)[:, :, None] * diff, axis=1)


def avoidance_input(positions: FloatArray, i: int, params: PotentialParams) -> FloatArray:
    P = np.asarray(positions, dtype=float)
    if not 0 <= i < len(P):
        raise IndexError(f"robot index {i} out of range for {len(P)} robots")
    total = np.zeros(2)
    for j in range(len(P)):
        if j == i:
            continue
        rho = float(np.linalg.norm(P[i] - P[j]))
        if rho < params.sensing_radius:
            total += sensing_weight(rho, params)[0] * pair_repulsion(P[i], P[j], params)
    return total


def potential_gradient(positions: FloatArray, params: PotentialParams) -> FloatArray:
    """``grad F`` per robot: the negated avoidance inputs."""
    return -avoidance_inputs(positions, params)


def transformed_potential(
    gradient: FloatArray, transform: CbtTransform
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Split ``Phi grad F`` into its (intra, inter, centroid) stacked blocks."""
    F = transform.apply(np.asarray(gradient, dtype=float).reshape(transform.n, 2))
    return (
        F[transform.intra].ravel(),
        F[transform.inter].ravel(),
        F[transform.centroid].ravel(),
    )


def gradient_rate(
    positions: FloatArray, velocities: FloatArray, params: PotentialParams
) -> FloatArray:
    """Time derivative of ``grad F`` per robot, shape (n, 2).

    Differentiates ``w(rho) g(rho) delta`` with ``delta = p_i - p_j``::

        g * (w delta_dot + (w'(rho) rho_dot - (2/c) w (delta . delta_dot)) delta)
    """
    diff, rho, w, dw, g = _pair_terms(positions, params)
    V = np.asarray(velocities, dtype=float)
    ddiff = V[:, None, :] - V[None, :, :]
    inner = np.einsum("ijk,ijk->ij", diff, ddiff)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_dot = np.where(rho > 0, inner / rho, 0.0)
    radial = dw * rho_dot - (2.0 / params.length_scale) * w * inner
    term = g[:, :, None] * (w[:, :, None] * ddiff + radial[:, :, None] * diff)
    return -np.sum(term, axis=1)


def potential_rate(
    positions: FloatArray,
    velocities: FloatArray,
    transform: CbtTransform,
    params: PotentialParams,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """``d F_pot / dt`` split into (intra, inter, centroid) blocks."""
    return transformed_potential(gradient_rate(positions, velocities, params), transform)


def estimate_potential_bound(
    transform: CbtTransform, params: PotentialParams, safety: float = 2.0, samples: int = 301
) -> tuple[float, float, float]:
    """Bound ``|dF_pot/dt|`` per block from worst-case two-robot approaches.

    Two robots close in on each other at ``2 * approach_speed`` (radially or
    tangentially) at distances sampled over ``[0, r_sense]``.  The pair rate is
    mapped through every column pair of ``Phi``; the largest block norm
    found, times ``safety``, is returned.
    """
    v = 2.0 * params.approach_speed
    rhos = np.linspace(0.0, params.sensing_radius, samples)
    pair_rate = 0.0
    for rho in rhos:
        pos = np.array([[0.0, 0.0], [rho, 0.0]])
        for rel in (np.array([v, 0.0]), np.array([0.0, v])):
            vel = np.array([[0.0, 0.0], -rel])
            rate = gradient_rate(pos, vel, params)[0]
            pair_rate = max(pair_rate, float(np.linalg.norm(rate)))
    # rate of robot i is +q, robot j gets -q; the block image is (Phi[:, i] - Phi[:, j]) q
    phi = transform.matrix
    out = []
    for block in BLOCKS:
        rows = phi[transform.block(block)]
        spread = 0.0
        for i in range(transform.n):
            for j in range(i + 1, transform.n):
                spread = max(spread, float(np.linalg.norm(rows[:, i] - rows[:, j])))
        out.append(safety * spread * pair_rate)
    return tuple(out)


@dataclass(frozen=True)
class GainCheck:
    passed: dict[str, bool]
    margin: dict[str, float]
    bound: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def check_gain_condition(
    gains: ControllerGains,
    params: PotentialParams,
    transform: CbtTransform | None = None,
) -> GainCheck:
    """Test ``gain_i > F_bar_i + gamma_i`` for every block.

    The gain is the applied reaching gain (``delta`` divided by the block's
    time-scale factor).  ``F_bar`` comes from ``params.bound`` or, failing
    that, from :func:`estimate_potential_bound`.
    """
    if params.bound is not None:
        bound = params.bound
    elif transform is not None:
        bound = estimate_potential_bound(transform, params)
    else:
        raise ValueError("no potential bound configured and no transform to estimate one")
    passed, margin, bounds = {}, {}, {}
    for block, fbar in zip(BLOCKS, bound):
        m = gains.reaching_gain(block) - fbar - gains.gamma(block)
        passed[block] = m > 0
        margin[block] = m
        bounds[block] = fbar
    return GainCheck(passed=passed, margin=margin, bound=bounds)
