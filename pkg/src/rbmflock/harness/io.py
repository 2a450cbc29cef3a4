"""CSV tables with a JSON sidecar, written into timestamped run directories."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "RBMFLOCK_OUTPUT_ROOT"


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row of length {len(row)} under a {len(header)}-column header")
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """Header and float array of a numeric CSV."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_sidecar(csv_path, config: dict, extra=None):
    side = Path(csv_path).with_suffix(".json")
    payload = {"config": config}
    if extra:
        payload.update(extra)
    side.write_text(json.dumps(payload, indent=2, sort_keys=True, default=format_value) + "\n")
    return side


def write_table(run_dir, name, header, rows, config: dict, extra=None):
    path = write_csv(Path(run_dir) / f"{name}.csv", header, rows)
    write_sidecar(path, config, extra)
    return path


def output_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def make_run_dir(label: str, root=None) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    path = output_root(root) / f"{stamp}-{label}"
    path.mkdir(parents=True, exist_ok=False)
    return path


def ensemble_rows(positions, velocities):
    d = positions.shape[1]
    header = [f"x{c}" for c in range(d)] + [f"v{c}" for c in range(d)]
    return header, np.hstack([positions, velocities])


def histogram_rows(hist, prefix_names=None):
    """One row per cell: cell-centre coordinates then density."""
    centers = hist.grid.centers()
    names = prefix_names or [f"c{i}" for i in range(len(centers))]
    mesh = np.meshgrid(*centers, indexing="ij")
    cols = [m.ravel() for m in mesh] + [hist.density.ravel()]
    return names + ["density"], np.column_stack(cols)
