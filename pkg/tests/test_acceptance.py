"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import time

import numpy as np
import pytest

from formctl import cli
from formctl.cbt import build_cbt, jacobi_rows, to_shape
from formctl.collision import PotentialParams, potential_gradient, potential_rate, transformed_potential
from formctl.config import IntegratorSettings, InitialConditions, dumps_config, preset
from formctl.dynamics import RobotParams, eval_matrix_b
from formctl.sim import detect_convergence, domain_equivalence_audit, run_scenario

R2 = 1.0 / math.sqrt(2.0)


def pure_sign(cfg, h, duration=20.0, every=1):
    return cfg.replace(
        gains=dataclasses.replace(cfg.gains, boundary_layer=0.0),
        integrator=IntegratorSettings(method="semi_implicit_euler", h=h, duration=duration, record_every=every),
    )


def _fmt(v):
    return "none" if v is None else f"{v:.3f}"


def test_criterion_1_time_scales(criterion):
    cfg = pure_sign(preset("paper_3x3"), h=1e-4, every=10)
    start = time.perf_counter()
    rep = detect_convergence(run_scenario(cfg))
    elapsed = time.perf_counter() - start
    t = rep.reach_times
    ranges = {"intra": (0.02, 0.5), "inter": (0.2, 5.0), "centroid": (2.0, 20.0)}
    in_range = {b: t[b] is not None and lo <= t[b] <= hi for b, (lo, hi) in ranges.items()}
    ordered = all(v is not None for v in t.values()) and t["intra"] < t["inter"] < t["centroid"]
    ratios_ok = all(r is not None and 3.0 <= r <= 30.0 for r in rep.ratios.values())
    passed = all(in_range.values()) and ordered and ratios_ok and elapsed < 10.0
    detail = (
        f"t_intra={_fmt(t['intra'])} t_inter={_fmt(t['inter'])} t_centroid={_fmt(t['centroid'])} "
        f"ratios inter/intra={_fmt(rep.ratios['inter/intra'])} centroid/inter={_fmt(rep.ratios['centroid/inter'])} "
        f"ordered={ordered} runtime={elapsed:.1f}s; surface reach "
        + " ".join(f"{b}={_fmt(v)}" for b, v in rep.surface_reach_times.items())
    )
    criterion(1, passed, detail)
    assert passed, detail


def test_criterion_2_finite_time_bounds(criterion):
    base = pure_sign(preset("paper_3x3"), h=1e-3)
    h = base.integrator.h
    worst = -np.inf
    failures = []
    start = time.perf_counter()
    for seed in range(20):
        ic = InitialConditions(kind="random", seed=seed, radius=10.0, center=(-10.0, 0.0))
        rep = detect_convergence(run_scenario(base.replace(initial=ic)))
        for b, bound in rep.bounds.items():
            reach = rep.surface_reach_times[b]
            if reach is None or reach > bound + h:
                failures.append((seed, b, reach, bound))
            else:
                worst = max(worst, (reach - bound) / max(bound, h))
    elapsed = time.perf_counter() - start
    passed = not failures and elapsed < 30.0
    detail = f"20 seeds, violations={failures or 0}, max (reach-bound)/bound={worst:.3f}, runtime={elapsed:.1f}s"
    criterion(2, passed, detail)
    assert passed, detail


def test_criterion_3_domain_equivalence(criterion):
    cfg = preset("paper_3x3")
    assert cfg.gains.boundary_layer > 0 and cfg.integrator.h == 1e-3
    dev = domain_equivalence_audit(cfg, steps=1000)
    passed = dev < 1e-6
    detail = f"max |dZ| over 1000 steps = {dev:.3e} (limit 1e-6)"
    criterion(3, passed, detail)
    assert passed, detail


def test_criterion_4_transform_properties(criterion):
    rng = np.random.default_rng(4)
    worst = {"inverse": 0.0, "translation": 0.0, "centroid": 0.0, "rowsum": 0.0}
    count = 0
    bitwise = True
    k3 = np.array([[-R2, R2, 0.0], [-0.5, -0.5, 1.0]])
    for m in range(1, 6):
        for sizes in itertools.product(range(2, 7), repeat=m):
            tr = build_cbt(sizes)
            n = tr.n
            phi = tr.matrix
            worst["inverse"] = max(worst["inverse"], np.abs(phi @ tr.inverse - np.eye(n)).max())
            X = rng.normal(scale=5.0, size=(n, 2))
            shift = rng.uniform(-10, 10, 2)
            a, b = to_shape(tr, X), to_shape(tr, X + shift)
            dev = max(np.abs(a.intra - b.intra).max(initial=0.0), np.abs(a.inter - b.inter).max(initial=0.0))
            worst["translation"] = max(worst["translation"], dev)
            worst["centroid"] = max(worst["centroid"], np.abs(a.centroid[0] - X.mean(axis=0)).max())
            worst["centroid"] = max(worst["centroid"], np.abs(phi[-1] - 1.0 / n).max())
            worst["rowsum"] = max(worst["rowsum"], np.abs(phi[:-1].sum(axis=1)).max(initial=0.0))
            for g, k in enumerate(sizes):
                if k == 3:
                    rows = phi[tr.group_rows(g), tr.partition.columns(g)]
                    bitwise &= np.array_equal(rows, k3)
            count += 1
    # the worked nine-robot example, coefficient by coefficient
    tr = build_cbt([3, 3, 3])
    expected_inter = np.zeros((2, 9))
    expected_inter[0, 0:3], expected_inter[0, 3:6] = R2 / 3, -R2 / 3
    expected_inter[1, 0:6], expected_inter[1, 6:9] = -0.5 / 3, 1.0 / 3
    bitwise &= np.array_equal(tr.matrix[tr.inter], expected_inter)
    bitwise &= np.array_equal(jacobi_rows(3), k3)
    passed = (
        worst["inverse"] < 1e-10
        and worst["translation"] <= 1e-12
        and worst["centroid"] <= 1e-12
        and worst["rowsum"] <= 1e-12
        and bitwise
    )
    detail = (
        f"{count} partitions; |PhiPhi^-1 - I|={worst['inverse']:.1e} translation={worst['translation']:.1e} "
        f"centroid={worst['centroid']:.1e} rowsum={worst['rowsum']:.1e} 3-robot rows bitwise={bitwise}"
    )
    criterion(4, passed, detail)
    assert passed, detail


def test_criterion_5_det_b(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        m, d, R, r = rng.uniform(0.2, 5.0), rng.uniform(0.01, 0.5), rng.uniform(0.1, 1.0), rng.uniform(0.02, 0.5)
        d *= rng.choice([-1.0, 1.0])
        j = rng.uniform(0.1, 3.0)
        p = RobotParams(mass=m, inertia=j + m * d * d, wheel_separation=R, wheel_radius=r, com_offset=d)
        theta = rng.uniform(-10, 10)
        expected = -2 * d * R / (m * p.j_eff * r * r)
        worst = max(worst, abs(np.linalg.det(eval_matrix_b(theta, p)) - expected) / abs(expected))
    passed = worst < 1e-10
    detail = f"100 draws, max relative error {worst:.1e}"
    criterion(5, passed, detail)
    assert passed, detail


def test_criterion_6_collision_avoidance(criterion):
    base = preset("head_on")
    off = run_scenario(base)
    on_cfg = base.replace(collision=True)
    on = run_scenario(on_cfg)
    rep = detect_convergence(on)
    baseline = float(off.min_distance.min())
    sense = on_cfg.potential.sensing_radius
    first = int(np.argmax(on.min_distance < sense)) if (on.min_distance < sense).any() else len(on)
    after = on.min_distance[first:]
    final = on.error_norms[-1]
    defaults = on_cfg.potential
    passed = (
        (defaults.amplitude, defaults.length_scale, defaults.sensing_radius) == (5.0, 2.0, 3.0)
        and on_cfg.integrator.duration == 20.0
        and baseline < 0.3
        and after.size > 0
        and bool(np.all(after > 2 * baseline))
        and bool(np.all(final < on_cfg.tol_conv))
    )
    detail = (
        f"baseline min={baseline:.3f} m, with avoidance min after first interaction (t={on.t[min(first, len(on) - 1)]:.2f}s)"
        f"={after.min() if after.size else float('nan'):.3f} m, final errors={np.array2string(final, precision=4)}, "
        f"gain margins={ {b: round(v, 2) for b, v in rep.gain_margin.items()} }"
    )
    criterion(6, passed, detail)
    assert passed, detail


def test_criterion_7_potential_rate(criterion):
    rng = np.random.default_rng(7)
    tr = build_cbt([3, 3, 3])
    params = PotentialParams()
    eps = 1e-5
    worst = 0.0
    for _ in range(50):
        P = rng.uniform(-2.5, 2.5, size=(9, 2))
        V = rng.normal(scale=2.0, size=(9, 2))
        analytic = np.concatenate(potential_rate(P, V, tr, params))
        plus = np.concatenate(transformed_potential(potential_gradient(P + eps * V, params), tr))
        minus = np.concatenate(transformed_potential(potential_gradient(P - eps * V, params), tr))
        fd = (plus - minus) / (2 * eps)
        worst = max(worst, np.linalg.norm(analytic - fd) / np.linalg.norm(fd))
    passed = worst < 1e-6
    detail = f"50 configurations, max relative error {worst:.1e}"
    criterion(7, passed, detail)
    assert passed, detail


def test_criterion_8_determinism(criterion, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(dumps_config(preset("paper_3x3")))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["simulate", "--config", str(cfg_path), "--seed", "7", "--out", str(out), "--no-figures"]) == 0
        outs.append(out)
    names = ("trajectory.csv", "shape.csv", "mindist.csv", "report.json")
    same = {name: (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes() for name in names}
    size = (outs[0] / "trajectory.csv").stat().st_size
    passed = all(same.values())
    detail = f"identical={same}, trajectory.csv {size / 1e6:.1f} MB"
    criterion(8, passed, detail)
    assert passed, detail
