"""Closed-loop fixed-step simulation, convergence detection and audits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from formctl import collision as col
from formctl.cbt import BLOCKS, CbtTransform, build_cbt, transform_dynamics
from formctl.config import ScenarioConfig
from formctl.dynamics import (
    FleetParams,
    RobotState,
    TorqueInput,
    assemble_augmented,
    fleet_accel,
    fleet_drift,
    fleet_solve_input,
)
from formctl.errors import ConfigError, DivergenceError
from formctl.smc import DesiredTrajectory, saturate, settling_time_bound

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(eq=False)
class FleetState:
    positions: FloatArray
    velocities: FloatArray
    theta: FloatArray
    theta_dot: FloatArray

    def copy(self) -> FleetState:
        return FleetState(
            self.positions.copy(), self.velocities.copy(), self.theta.copy(), self.theta_dot.copy()
        )

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.positions).all()
            and np.isfinite(self.velocities).all()
            and np.isfinite(self.theta).all()
            and np.isfinite(self.theta_dot).all()
        )


def integrate_step(
    state: FleetState,
    torques: FloatArray,
    h: float,
    fleet: FleetParams,
    method: str = "rk4",
) -> FleetState:
    """Advance every robot by one step with the torques held constant."""
    p, v, th, om = state.positions, state.velocities, state.theta, state.theta_dot
    if method == "semi_implicit_euler":
        a, alpha = fleet_accel(v, th, om, torques, fleet)
        v1 = v + h * a
        om1 = om + h * alpha
        return FleetState(p + h * v1, v1, th + h * om1, om1)
    if method != "rk4":
        raise ConfigError(f"unknown integrator {method!r}", "integrator.method")

    def deriv(v_, th_, om_):
        return fleet_accel(v_, th_, om_, torques, fleet)

    a1, b1 = deriv(v, th, om)
    v2, om2 = v + 0.5 * h * a1, om + 0.5 * h * b1
    a2, b2 = deriv(v2, th + 0.5 * h * om, om2)
    v3, om3 = v + 0.5 * h * a2, om + 0.5 * h * b2
    a3, b3 = deriv(v3, th + 0.5 * h * om2, om3)
    v4, om4 = v + h * a3, om + h * b3
    a4, b4 = deriv(v4, th + h * om3, om4)
    return FleetState(
        p + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4),
        v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4),
        th + h / 6.0 * (om + 2 * om2 + 2 * om3 + om4),
        om + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4),
    )


@dataclass(eq=False)
class ControlOutput:
    torques: FloatArray
    Z: FloatArray
    Z_dot: FloatArray
    Z_e: FloatArray
    surfaces: FloatArray
    potential_rate: FloatArray | None


class FormationController:
    """Row-wise evaluation of the three sliding mode laws.

    Works on (n, 2) arrays with per-row slopes and reaching gains instead
    of forming ``P = Phi A Phi^-1`` explicitly: ``P Z_dot + R`` equals
    ``Phi (A X_dot + C)``.
    """

    def __init__(self, cfg: ScenarioConfig, transform: CbtTransform | None = None) -> None:
        self.cfg = cfg
        self.transform = transform or build_cbt(cfg.partition)
        self.fleet = FleetParams.from_robots(cfg.robots)
        self.desired = DesiredTrajectory.from_basis(self.transform, cfg.basis_array(), cfg.trajectory)
        self.slopes = cfg.gains.row_slopes(self.transform)[:, None]
        self.gains = cfg.gains.row_reaching_gains(self.transform)[:, None]
        self.phi = self.transform.matrix
        self.phi_inv = self.transform.inverse
        self.collision = cfg.collision

    def __call__(self, t: float, state: FleetState) -> ControlOutput:
        phi = self.phi
        Zd, Zd_dot, Zd_ddot = self.desired.at(t)
        Z = phi @ state.positions
        Z_dot = phi @ state.velocities
        Z_e = Z - Zd
        Z_e_dot = Z_dot - Zd_dot
        drift = phi @ fleet_drift(state.velocities, state.theta, state.theta_dot, self.fleet)

        surfaces = self.slopes * Z_e + Z_e_dot
        F = -self.slopes * Z_e_dot - drift + Zd_ddot
        rate = None
        if self.collision:
            pot = self.cfg.potential
            surfaces += phi @ col.potential_gradient(state.positions, pot)
            rate = phi @ col.gradient_rate(state.positions, state.velocities, pot)
            F += rate
        F -= self.gains * saturate(surfaces, self.cfg.gains.boundary_layer)

        torques = fleet_solve_input(state.theta, self.phi_inv @ F, self.fleet)
        return ControlOutput(torques, Z, Z_dot, Z_e, surfaces, rate)


@dataclass(eq=False)
class SimResult:
    """Recorded time series; every array's first axis is the time grid."""

    t: FloatArray
    positions: FloatArray
    velocities: FloatArray
    theta: FloatArray
    theta_dot: FloatArray
    Z: FloatArray
    Z_dot: FloatArray
    surfaces: FloatArray
    torques: FloatArray
    min_distance: FloatArray
    error_norms: FloatArray
    potential_rate_norms: FloatArray
    transform: CbtTransform = field(repr=False)
    config: ScenarioConfig = field(repr=False)

    @property
    def h(self) -> float:
        return self.config.integrator.h

    def __len__(self) -> int:
        return self.t.size


def _min_distance(positions: FloatArray, iu: tuple[FloatArray, FloatArray]) -> float:
    d = positions[iu[0]] - positions[iu[1]]
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", d, d)))) if d.size else np.inf


def _block_norms(values: FloatArray, transform: CbtTransform) -> FloatArray:
    return np.array([np.linalg.norm(values[transform.block(b)]) for b in BLOCKS])


def check_collision_gains(cfg: ScenarioConfig, transform: CbtTransform) -> col.GainCheck | None:
    if not cfg.collision:
        return None
    check = col.check_gain_condition(cfg.gains, cfg.potential, transform)
    if not check.ok:
        failing = ", ".join(
            f"{b}: margin {check.margin[b]:.3g}" for b in BLOCKS if not check.passed[b]
        )
        if cfg.enforce_gain_condition:
            raise ConfigError(
                f"reaching gains do not dominate the potential rate bound ({failing}); "
                "raise the gains or set potential.enforce_gain_condition = false",
                "gains",
            )
        log.warning("collision gain condition violated (%s); continuing as configured", failing)
    return check


def run_scenario(
    cfg: ScenarioConfig,
    engine: str = "compiled",
    progress: Callable[[int, int], None] | None = None,
) -> SimResult:
    """Simulate the closed loop from ``cfg.initial`` for ``cfg.integrator.duration``.

    The control is evaluated on every recorded state, so torques line up
    with the states they act on.  ``engine="python"`` runs the numpy
    reference loop; the default compiled engine is the same loop under numba.
    """
    if engine not in ("compiled", "python"):
        raise ConfigError(f"unknown engine {engine!r}")
    transform = build_cbt(cfg.partition)
    check_collision_gains(cfg, transform)
    ctrl = FormationController(cfg, transform)
    integ = cfg.integrator
    steps, stride = integ.steps, integ.record_every
    n = cfg.n
    n_rec = steps // stride + 1
    rec = {
        "positions": np.empty((n_rec, n, 2)),
        "velocities": np.empty((n_rec, n, 2)),
        "theta": np.empty((n_rec, n)),
        "theta_dot": np.empty((n_rec, n)),
        "Z": np.empty((n_rec, n, 2)),
        "Z_dot": np.empty((n_rec, n, 2)),
        "surfaces": np.empty((n_rec, n, 2)),
        "torques": np.empty((n_rec, n, 2)),
        "min_distance": np.empty(n_rec),
        "error_norms": np.empty((n_rec, 3)),
        "potential_rate_norms": np.zeros((n_rec, 3)),
    }
    state = FleetState(*(np.array(a, dtype=float) for a in cfg.initial_state()))
    if engine == "python":
        _loop_python(ctrl, state, rec, progress)
    else:
        _loop_compiled(ctrl, state, rec)
    t_grid = np.arange(n_rec) * (integ.h * stride)
    return SimResult(t=t_grid, transform=transform, config=cfg, **rec)


def _loop_python(ctrl: FormationController, state: FleetState, rec: dict, progress) -> None:
    cfg, transform = ctrl.cfg, ctrl.transform
    integ = cfg.integrator
    h, steps, stride = integ.h, integ.steps, integ.record_every
    iu = np.triu_indices(cfg.n, k=1)
    for k in range(steps + 1):
        out = ctrl(k * h, state)
        if not (state.is_finite() and np.isfinite(out.torques).all()):
            raise DivergenceError("non-finite state", step=k)
        if k % stride == 0:
            j = k // stride
            rec["positions"][j] = state.positions
            rec["velocities"][j] = state.velocities
            rec["theta"][j] = state.theta
            rec["theta_dot"][j] = state.theta_dot
            rec["Z"][j] = out.Z
            rec["Z_dot"][j] = out.Z_dot
            rec["surfaces"][j] = out.surfaces
            rec["torques"][j] = out.torques
            rec["min_distance"][j] = _min_distance(state.positions, iu)
            rec["error_norms"][j] = _block_norms(out.Z_e, transform)
            if out.potential_rate is not None:
                rec["potential_rate_norms"][j] = _block_norms(out.potential_rate, transform)
        if k == steps:
            break
        state = integrate_step(state, out.torques, h, ctrl.fleet, integ.method)
        if progress is not None and k % 10000 == 0:
            progress(k, steps)


def _loop_compiled(ctrl: FormationController, state: FleetState, rec: dict) -> None:
    from formctl import _kernels

    cfg, tr, fleet = ctrl.cfg, ctrl.transform, ctrl.fleet
    integ = cfg.integrator
    track = cfg.trajectory
    pot = cfg.potential
    failed = _kernels.simulate(
        state.positions, state.velocities, state.theta, state.theta_dot,
        np.ascontiguousarray(ctrl.phi), np.ascontiguousarray(ctrl.phi_inv),
        ctrl.slopes[:, 0].copy(), ctrl.gains[:, 0].copy(), float(cfg.gains.boundary_layer),
        np.ascontiguousarray(ctrl.desired.shape, dtype=float),
        np.array([track.speed, track.amplitude, track.omega, *track.origin], dtype=float),
        fleet.mass, fleet.wheel_radius, fleet.com_offset, fleet.heading_gain,
        bool(cfg.collision),
        np.array([pot.amplitude, pot.length_scale, pot.sensing_radius], dtype=float),
        float(integ.h), int(integ.steps), int(integ.record_every),
        _kernels.EULER if integ.method == "semi_implicit_euler" else _kernels.RK4,
        rec["positions"], rec["velocities"], rec["theta"], rec["theta_dot"],
        rec["Z"], rec["Z_dot"], rec["surfaces"], rec["torques"],
        rec["min_distance"], rec["error_norms"], rec["potential_rate_norms"],
        np.array([tr.intra.stop, tr.inter.stop, tr.centroid.stop], dtype=np.int64),
    )
    if failed >= 0:
        raise DivergenceError("non-finite state", step=int(failed))


# -- convergence ---------------------------------------------------------------


def sustained_crossing(series: FloatArray, threshold: float, hold_samples: int) -> int | None:
    """First index from which ``series < threshold`` holds for ``hold_samples``
    further samples (or until the end of the series)."""
    below = np.asarray(series) < threshold
    n = below.size
    run = np.zeros(n + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        run[i] = run[i + 1] + 1 if below[i] else 0
    ok = (run[:n] > hold_samples) | (run[:n] == n - np.arange(n))
    ok &= below
    idx = np.flatnonzero(ok)
    return int(idx[0]) if idx.size else None


@dataclass
class ConvergenceReport:
    reach_times: dict[str, float | None]
    surface_reach_times: dict[str, float | None]
    bounds: dict[str, float]
    collision_bounds: dict[str, float | None]
    initial_lyapunov: dict[str, float]
    ratios: dict[str, float | None]
    min_distance: float
    max_potential_rate: dict[str, float]
    potential_bound: dict[str, float] | None
    gain_margin: dict[str, float] | None
    flags: dict[str, bool]
    tol: float
    h: float

    def to_dict(self) -> dict:
        return {
            "tol_conv": self.tol,
            "step": self.h,
            "reach_times": self.reach_times,
            "surface_reach_times": self.surface_reach_times,
            "settling_time_bounds": self.bounds,
            "collision_reach_bounds": self.collision_bounds,
            "initial_lyapunov": self.initial_lyapunov,
            "time_scale_ratios": self.ratios,
            "min_distance": self.min_distance,
            "max_potential_rate": self.max_potential_rate,
            "potential_rate_bound": self.potential_bound,
            "collision_gain_margin": self.gain_margin,
            "flags": self.flags,
        }


def surface_band(cfg: ScenarioConfig, block: str) -> float:
    """Width within which a block counts as on its surface: boundary layer
    plus the two-step chatter of the discrete switching law."""
    g = cfg.gains
    return g.boundary_layer + 2.0 * g.reaching_gain(block) * cfg.integrator.h


def detect_convergence(
    result: SimResult, tol: float | None = None, hold: float | None = None
) -> ConvergenceReport:
    cfg = result.config
    tr = result.transform
    tol = cfg.tol_conv if tol is None else tol
    hold = cfg.hold if hold is None else hold
    dt = result.t[1] - result.t[0] if len(result) > 1 else cfg.integrator.h
    hold_samples = int(round(hold / dt))

    reach, surf_reach, bounds, cbounds, V0 = {}, {}, {}, {}, {}
    for i, b in enumerate(BLOCKS):
        idx = sustained_crossing(result.error_norms[:, i], tol, hold_samples)
        reach[b] = None if idx is None else float(result.t[idx])
        s = result.surfaces[:, tr.block(b)].reshape(len(result), -1)
        if s.shape[1] == 0:
            surf_reach[b], bounds[b], cbounds[b], V0[b] = 0.0, 0.0, None, 0.0
            continue
        peak = np.abs(s).max(axis=1)
        idx = sustained_crossing(peak, surface_band(cfg, b), hold_samples)
        surf_reach[b] = None if idx is None else float(result.t[idx])
        V0[b] = 0.5 * float(s[0] @ s[0])
        bounds[b] = settling_time_bound(b, V0[b], cfg.gains)
        # collision-mode expression 2 V(0) / gamma with V = s^T s
        cbounds[b] = 2.0 * float(s[0] @ s[0]) / cfg.gains.gamma(b) if cfg.collision else None

    def ratio(a: float | None, b: float | None) -> float | None:
        if a is None or b is None or b == 0:
            return None
        return a / b

    ratios = {
        "inter/intra": ratio(reach["inter"], reach["intra"]),
        "centroid/inter": ratio(reach["centroid"], reach["inter"]),
    }
    max_rate = {b: float(result.potential_rate_norms[:, i].max()) for i, b in enumerate(BLOCKS)}
    check = check_collision_gains(cfg.replace(enforce_gain_condition=False), tr) if cfg.collision else None

    flags = {
        "converged": all(v is not None for v in reach.values()),
        "within_settling_bounds": all(
            surf_reach[b] is not None and surf_reach[b] <= bounds[b] + cfg.integrator.h
            for b in BLOCKS
        ),
        "time_scale_ordering": (
            all(v is not None for v in reach.values())
            and reach["intra"] < reach["inter"] < reach["centroid"]
        ),
    }
    if check is not None:
        flags["gain_condition"] = check.ok
        flags["rate_bound_covers_observed"] = all(
            max_rate[b] <= check.bound[b] + 1e-9 for b in BLOCKS
        )

    return ConvergenceReport(
        reach_times=reach,
        surface_reach_times=surf_reach,
        bounds=bounds,
        collision_bounds=cbounds,
        initial_lyapunov=V0,
        ratios=ratios,
        min_distance=float(np.min(result.min_distance)),
        max_potential_rate=max_rate,
        potential_bound=None if check is None else check.bound,
        gain_margin=None if check is None else check.margin,
        flags=flags,
        tol=tol,
        h=cfg.integrator.h,
    )


# -- domain equivalence ----------------------------------------------------------


def _transformed_rhs(transform: CbtTransform, robots, Z_dot, theta, theta_dot, torques):
    """Right-hand side of the shape-domain dynamics ``Z_ddot = P Z_dot + Phi B U + R``,
    assembled from the explicit block-diagonal matrices."""
    phi = transform.stacked()
    X_dot = transform.stacked_inverse() @ Z_dot
    states = [
        RobotState(position=(0.0, 0.0), velocity=(X_dot[2 * i], X_dot[2 * i + 1]), theta=theta[i], theta_dot=theta_dot[i])
        for i in range(transform.n)
    ]
    U = [TorqueInput(*torques[i]) for i in range(transform.n)]
    aug = assemble_augmented(states, robots, U)
    dyn = transform_dynamics(transform, aug.A, aug.C)
    Z_ddot = dyn.P @ Z_dot + phi @ aug.B @ aug.U + dyn.R
    theta_ddot = np.array(
        [p.wheel_separation / (p.j_eff * p.wheel_radius) * (u.tau_right - u.tau_left) for p, u in zip(robots, U)]
    )
    return Z_ddot, theta_ddot


def domain_equivalence_audit(cfg: ScenarioConfig, steps: int = 1000) -> float:
    """Max ``|Phi X_k - Z_k|`` between the physical closed loop and an RK4
    integration of the transformed dynamics driven by the same torques."""
    transform = build_cbt(cfg.partition)
    check_collision_gains(cfg.replace(enforce_gain_condition=False), transform)
    ctrl = FormationController(cfg, transform)
    h = cfg.integrator.h
    robots = cfg.robots
    phi = transform.stacked()

    state = FleetState(*(np.asarray(a, dtype=float) for a in cfg.initial_state()))
    Z = phi @ state.positions.ravel()
    Z_dot = phi @ state.velocities.ravel()
    th, om = state.theta.copy(), state.theta_dot.copy()
    worst = 0.0
    for k in range(steps):
        U = ctrl(k * h, state).torques
        state = integrate_step(state, U, h, ctrl.fleet, "rk4")

        def f(Zd, th_, om_):
            return _transformed_rhs(transform, robots, Zd, th_, om_, U)

        a1, b1 = f(Z_dot, th, om)
        z2, o2 = Z_dot + 0.5 * h * a1, om + 0.5 * h * b1
        a2, b2 = f(z2, th + 0.5 * h * om, o2)
        z3, o3 = Z_dot + 0.5 * h * a2, om + 0.5 * h * b2
        a3, b3 = f(z3, th + 0.5 * h * o2, o3)
        z4, o4 = Z_dot + h * a3, om + h * b3
        a4, b4 = f(z4, th + h * o3, o4)
        Z = Z + h / 6.0 * (Z_dot + 2 * z2 + 2 * z3 + z4)
        Z_dot = Z_dot + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        th = th + h / 6.0 * (om + 2 * o2 + 2 * o3 + o4)
        om = om + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        worst = max(worst, float(np.max(np.abs(phi @ state.positions.ravel() - Z))))
    return worst
