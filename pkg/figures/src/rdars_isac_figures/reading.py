"""Strict readers for the simulator's CSV/JSON output schema.

Every value plotted downstream comes from these files; nothing is
recomputed.  Readers fail loudly, naming the offending file, on missing
files, empty bodies, or unexpected columns.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

RECORD_COLUMNS = ["scheme", "trial", "seed", "sweep_value", "radar_snr_db",
                  "min_sinr_db", "comm_residual", "selection_residual", "iterations"]
TRACE_COLUMNS = ["iter", "radar_snr_db", "penalized_obj", "comm_residual",
                 "selection_residual", "min_sinr_db", "rho1", "rho2"]
BEAM_BS_COLUMNS = ["theta_rad", "gain_db"]
BEAM_RDARS_COLUMNS = ["theta_rad", "psi_rad", "gain_db"]


class SchemaError(ValueError):
    """A CSV file is missing, empty, or carries unexpected columns."""


def _read_csv(path: Path, expected_columns) -> dict:
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if header != expected_columns:
        raise SchemaError(f"{path}: unexpected columns {header!r}, "
                          f"expected {expected_columns!r}")
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    columns = {name: [] for name in header}
    for row in rows[1:]:
        if len(row) != len(header):
            raise SchemaError(f"{path}: ragged row {row!r}")
        for name, cell in zip(header, row):
            columns[name].append(cell)
    return columns


def _floats(cells) -> np.ndarray:
    return np.array([float(c) for c in cells])


def read_records(path) -> dict:
    cols = _read_csv(Path(path), RECORD_COLUMNS)
    return {
        "scheme": cols["scheme"],
        "trial": _floats(cols["trial"]).astype(int),
        "sweep_value": _floats(cols["sweep_value"]),
        "radar_snr_db": _floats(cols["radar_snr_db"]),
        "min_sinr_db": _floats(cols["min_sinr_db"]),
        "iterations": _floats(cols["iterations"]).astype(int),
    }


def read_trace(path) -> dict:
    cols = _read_csv(Path(path), TRACE_COLUMNS)
    return {name: _floats(cols[name]) for name in TRACE_COLUMNS}


def read_beampattern_bs(path) -> dict:
    cols = _read_csv(Path(path), BEAM_BS_COLUMNS)
    return {name: _floats(cols[name]) for name in BEAM_BS_COLUMNS}


def read_beampattern_rdars(path) -> dict:
    cols = _read_csv(Path(path), BEAM_RDARS_COLUMNS)
    out = {name: _floats(cols[name]) for name in BEAM_RDARS_COLUMNS}
    theta = np.unique(out["theta_rad"])
    psi = np.unique(out["psi_rad"])
    if theta.size * psi.size != out["gain_db"].size:
        raise SchemaError(f"{path}: gain grid is not theta x psi")
    grid = out["gain_db"].reshape(theta.size, psi.size)
    return {"theta_rad": theta, "psi_rad": psi, "gain_db": grid}


def read_summary(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    return json.loads(path.read_text(encoding="utf-8"))
