"""Atomic CSV/JSON writers for reports and trajectories."""

import csv
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


@contextmanager
def _atomic(path, newline=None):
    """Write to a temp file next to `path`, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline=newline) as f:
            yield f
        os.replace(tmp_path, path)
    except BaseException:
        Path(tmp_path).unlink(missing_ok=True)
        raise


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_csv_atomic(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with _atomic(path, newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else _plain(v) for v in row])
    return Path(path)


def write_json_atomic(path, payload: Any) -> Path:
    with _atomic(path) as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_plain)
        f.write("\n")
    return Path(path)


def trajectory_rows(batch):
    """(chain, time, coordinate, value) rows of a TrajectoryBatch."""
    for chain in range(batch.chains):
        for k, t in enumerate(batch.times):
            for j, value in enumerate(batch.states[chain, k]):
                yield chain, float(t), j, float(value)


def terminal_rows(batch, model):
    """(chain, label, x0_0..x0_{d-1}, nearest) rows of a TrajectoryBatch."""
    terminal = batch.terminal
    nearest = model.nearest_index(terminal, float(batch.times[-1]), batch.label)
    label = "" if batch.label is None else batch.label
    for chain in range(batch.chains):
        yield [chain, label, *(float(v) for v in terminal[chain]), int(nearest[chain])]


def terminal_header(d: int):
    return ["chain", "label", *(f"x0_{j}" for j in range(d)), "nearest"]
