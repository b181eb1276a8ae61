"""Trajectory CSV emission and parsing.

Values are written with 17 significant digits so parsing an emitted file
reproduces the logged doubles bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .simulation import RunMetrics, TrajectoryLog

_FMT = "%.17g"


def trajectory_columns(log: TrajectoryLog) -> list[str]:
    """Column names of the CSV emitted for this log, in order."""
    n = log.q.shape[1]
    cols = ["t"]
    cols += [f"q{i}" for i in range(1, n + 1)]
    cols += [f"xi{i}" for i in range(1, n + 1)]
    cols += ["e1", "e2"]
    cols += [f"u{i}" for i in range(1, n + 1)]
    cols += [f"d1_{i}" for i in range(1, n + 1)]
    cols += ["d2_1", "d2_2"]
    cols += [f"d_{i}" for i in range(1, n + 1)]
    if log.xihat is not None:
        cols += [f"xihat{i}" for i in range(1, n + 1)]
    cols += ["V_storage", "detJ"]
    return cols


def write_trajectory_csv(log: TrajectoryLog, path) -> None:
    """Write the log as a header row plus one row per sampled step."""
    blocks = [log.t[:, None], log.q, log.xi, log.e, log.u, log.d1, log.d2, log.d]
    if log.xihat is not None:
        blocks.append(log.xihat)
    blocks += [log.storage[:, None], log.detJ[:, None]]
    data = np.hstack(blocks)
    header = ",".join(trajectory_columns(log))
    np.savetxt(path, data, fmt=_FMT, delimiter=",", header=header, comments="")


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Parse an emitted trajectory CSV back into named column arrays."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        names = header.split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: column count mismatch")
    return {name: data[:, i] for i, name in enumerate(names)}


def write_metrics_json(m: RunMetrics, path) -> None:
    """Serialize run metrics; non-finite values become null."""
    payload = {}
    for key, val in asdict(m).items():
        if isinstance(val, float) and not np.isfinite(val):
            val = None
        payload[key] = val
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
