"""Trajectory, shape, distance and summary files for a finished run.

All files are written to a temporary name and renamed into place; on any
failure the files already produced by the call are removed.
"""

from __future__ import annotations

import io
import json
import os
from pathlib import Path

import numpy as np

from formctl.cbt import BLOCKS
from formctl.config import config_to_dict
from formctl.errors import OutputError
from formctl.sim import ConvergenceReport, SimResult

FMT = "%.9f"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _table(header: list[str], columns: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, columns, fmt=FMT, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def trajectory_csv(result: SimResult) -> str:
    K, n = result.theta.shape
    t = np.repeat(result.t, n)
    rid = np.tile(np.arange(n), K)
    data = np.column_stack(
        (
            t,
            rid,
            result.positions.reshape(-1, 2),
            result.theta.ravel(),
            result.theta_dot.ravel(),
            result.torques.reshape(-1, 2),
        )
    )
    fmt = [FMT, "%d"] + [FMT] * 6
    buf = io.StringIO()
    header = "t,robot_id,x,y,theta,theta_dot,tau_r,tau_l"
    np.savetxt(buf, data, fmt=fmt, delimiter=",", header=header, comments="")
    return buf.getvalue()


def shape_columns(n: int, transform) -> list[str]:
    names = []
    for b in BLOCKS:
        rows = range(transform.block(b).start, transform.block(b).stop)
        names += [f"{b}{i}" for i in rows]
    z = [f"z_{name}_{ax}" for name in names for ax in "xy"]
    s = [f"s_{name}_{ax}" for name in names for ax in "xy"]
    return ["t", *z, *s, "err_intra", "err_inter", "err_centroid"]


def shape_csv(result: SimResult) -> str:
    K = len(result)
    data = np.column_stack(
        (result.t, result.Z.reshape(K, -1), result.surfaces.reshape(K, -1), result.error_norms)
    )
    return _table(shape_columns(result.config.n, result.transform), data)


def mindist_csv(result: SimResult) -> str:
    return _table(["t", "min_distance"], np.column_stack((result.t, result.min_distance)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def report_json(result: SimResult, report: ConvergenceReport) -> str:
    doc = {"scenario": config_to_dict(result.config), "samples": len(result), **report.to_dict()}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"


def write_outputs(
    result: SimResult, report: ConvergenceReport, out_dir: str | Path
) -> dict[str, Path]:
    """Write trajectory.csv, shape.csv, mindist.csv and report.json."""
    out = Path(out_dir)
    files = {
        "trajectory": (out / "trajectory.csv", trajectory_csv),
        "shape": (out / "shape.csv", shape_csv),
        "mindist": (out / "mindist.csv", mindist_csv),
        "report": (out / "report.json", lambda r: report_json(r, report)),
    }
    written: dict[str, Path] = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        for key, (path, render) in files.items():
            _atomic_write(path, render(result))
            written[key] = path
    except OSError as exc:
        for path in written.values():
            path.unlink(missing_ok=True)
        raise OutputError(f"cannot write outputs to {out}: {exc.strerror or exc}") from exc
    return written


def phi_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, matrix, fmt="%.17g", delimiter=",")
    return buf.getvalue()
