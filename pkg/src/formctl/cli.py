"""Command line entry point.

    formctl simulate --preset paper_3x3 --out out/
    formctl simulate --config scenario.json --collision --seed 3
    formctl transform --partition 3,3,3
    formctl audit --preset paper_3x3 --steps 1000
    formctl preset paper_3x3 > scenario.json

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O error.  ``FORMCTL_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from formctl.cbt import build_cbt
from formctl.config import PRESETS, ScenarioConfig, dumps_config, load_config, preset
from formctl.errors import ConfigError, FormctlError, OutputError

log = logging.getLogger("formctl")


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("one of --config or --preset is required")
    if getattr(args, "collision", False):
        cfg = cfg.replace(collision=True)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(initial=dataclasses.replace(cfg.initial, seed=args.seed))
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    from formctl.outputs import write_outputs
    from formctl.sim import detect_convergence, run_scenario

    cfg = _scenario(args)
    out_dir = Path(args.out or cfg.out_dir)
    log.info("running %s: n=%d, h=%g, T=%g", cfg.name, cfg.n, cfg.integrator.h, cfg.integrator.duration)
    result = run_scenario(cfg)
    report = detect_convergence(result)
    write_outputs(result, report, out_dir)
    if cfg.figures and not args.no_figures:
        from formctl.plotting import render_figures

        try:
            render_figures(result, report, out_dir)
        except OSError as exc:
            raise OutputError(f"cannot write figures to {out_dir}: {exc}") from exc
    for block, t in report.reach_times.items():
        bound = report.bounds[block]
        reach = report.surface_reach_times[block]
        print(
            f"{block:9s} converged_at={'-' if t is None else f'{t:.4f}'}  "
            f"surface_reached_at={'-' if reach is None else f'{reach:.4f}'}  bound={bound:.4f}"
        )
    print(f"min_distance={report.min_distance:.4f}  outputs={out_dir}")
    return 0


def cmd_transform(args: argparse.Namespace) -> int:
    from formctl.outputs import phi_csv

    try:
        sizes = tuple(int(v) for v in args.partition.split(","))
    except ValueError:
        raise ConfigError(f"expected comma separated integers, got {args.partition!r}", "--partition") from None
    text = phi_csv(build_cbt(sizes).matrix)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {args.out}: {exc.strerror}") from exc
    else:
        sys.stdout.write(text)
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    from formctl.sim import domain_equivalence_audit

    cfg = _scenario(args)
    dev = domain_equivalence_audit(cfg, steps=args.steps)
    ok = dev < args.tol
    print(f"max_deviation={dev:.3e} steps={args.steps} h={cfg.integrator.h:g} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 3


def cmd_preset(args: argparse.Namespace) -> int:
    sys.stdout.write(dumps_config(preset(args.name)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formctl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write CSV/JSON/PNG outputs")
    sim.add_argument("--config", help="scenario JSON file")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--out", help="output directory (default: outputs.dir of the scenario)")
    sim.add_argument("--collision", action="store_true", help="enable collision avoidance")
    sim.add_argument("--seed", type=int, help="override the initial-condition seed")
    sim.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("transform", help="print the transform matrix as CSV")
    tr.add_argument("--partition", required=True, help="group sizes, e.g. 3,3,3")
    tr.add_argument("--out", help="write to a file instead of stdout")
    tr.set_defaults(func=cmd_transform)

    au = sub.add_parser("audit", help="physical vs transformed domain equivalence check")
    au.add_argument("--config")
    au.add_argument("--preset", choices=sorted(PRESETS))
    au.add_argument("--collision", action="store_true")
    au.add_argument("--seed", type=int)
    au.add_argument("--steps", type=int, default=1000)
    au.add_argument("--tol", type=float, default=1e-6)
    au.set_defaults(func=cmd_audit)

    pr = sub.add_parser("preset", help="print a built-in scenario as JSON")
    pr.add_argument("name", choices=sorted(PRESETS))
    pr.set_defaults(func=cmd_preset)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("FORMCTL_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormctlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
