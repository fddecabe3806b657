"""Monte Carlo experiment runner and CSV/JSON emission.

For each (sweep value, trial) pair one channel realization is drawn and
every requested scheme runs on it (paired comparison).  Rows are sorted
deterministically before emission so identical (spec, master seed) inputs
produce byte-identical ``records.csv``.

Wall-clock timings are kept out of ``records.csv`` (they would break byte
determinism) and land in ``timing.csv`` instead.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import synthesize_channels
from .errors import ConfigError, OptimizationAborted, SinrInfeasibleError
from .metrics import beampattern, user_sinr
from .optimizer import run_joint_optimization
from .scenario import SystemConfig, derive_geometry, desk_config, default_config, upa_dims_for
from .schemes import apply_scheme, get_scheme, scheme_names

__all__ = [
    "ExperimentSpec",
    "ExperimentRecord",
    "EXPERIMENT_KINDS",
    "run_experiment",
    "emit_outputs",
    "default_sweep_grid",
    "trial_seed",
]

EXPERIMENT_KINDS = ("convergence", "power", "elements", "sinr", "fixed-vs-opt-A", "beampattern")

RECORD_FIELDS = ("scheme", "trial", "seed", "sweep_value", "radar_snr_db",
                 "min_sinr_db", "comm_residual", "selection_residual", "iterations")
TRACE_FIELDS = ("iter", "radar_snr_db", "penalized_obj", "comm_residual",
                "selection_residual", "min_sinr_db", "rho1", "rho2")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    schemes: tuple
    trials: int
    base_config: SystemConfig
    master_seed: int
    grid: tuple = ()
    beam_grid_points: int = 361

    def validate(self) -> "ExperimentSpec":
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind '{self.kind}'")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for name in self.schemes:
            get_scheme(name)
        if not self.grid:
            raise ConfigError("sweep grid must be non-empty")
        return self


@dataclass
class ExperimentRecord:
    scheme: str
    trial: int
    seed: int
    sweep_value: float
    radar_snr_db: float
    min_sinr_db: float
    comm_residual: float
    selection_residual: float
    iterations: int
    wall_ms: float
    trace: list = field(default_factory=list, repr=False)
    beams: dict = field(default_factory=dict, repr=False)


def default_sweep_grid(kind: str) -> tuple:
    if kind in ("power", "fixed-vs-opt-A"):
        return (10.0, 15.0, 20.0, 25.0, 30.0)
    if kind == "elements":
        return (12.0, 24.0, 48.0, 96.0)
    if kind == "sinr":
        return (0.0, 5.0, 10.0, 15.0, 20.0)
    return (0.0,)


def default_schemes(kind: str) -> tuple:
    if kind == "fixed-vs-opt-A":
        return ("rdars-isac", "rdars-isac-fixed-a")
    if kind == "beampattern":
        return ("rdars-isac", "rdars-sensing-opt")
    return tuple(scheme_names())


def trial_seed(master_seed: int, trial: int) -> int:
    """Stable per-trial seed derived from the master seed."""
    return int(np.random.SeedSequence(entropy=master_seed, spawn_key=(trial,)).generate_state(1)[0])


def _config_at(base: SystemConfig, kind: str, value: float) -> SystemConfig:
    if kind in ("power", "fixed-vs-opt-A"):
        return replace(base, p_dbm=float(value)).validate()
    if kind == "elements":
        n = int(value)
        n1, n2 = upa_dims_for(n)
        return replace(base, n=n, n1=n1, n2=n2).validate()
    if kind == "sinr":
        return replace(base, gamma_bar_db=(float(value),) * base.k).validate()
    return base


def _beam_grids(spec: ExperimentSpec):
    theta = np.linspace(-np.pi / 2, np.pi / 2, spec.beam_grid_points)
    psi = np.linspace(-np.pi / 2, np.pi / 2, 121)
    return theta, psi


def _run_cell(spec: ExperimentSpec, value: float, trial: int) -> list:
    """All schemes on one (sweep value, trial) cell with shared channels."""
    cfg = _config_at(spec.base_config, spec.kind, value)
    seed = trial_seed(spec.master_seed, trial)
    cfg = replace(cfg, seed=seed)
    geometry = derive_geometry(cfg)
    channels = synthesize_channels(cfg, geometry, seed)
    records = []
    for name in spec.schemes:
        scheme = get_scheme(name)
        options = apply_scheme(scheme, cfg)
        start = time.perf_counter()
        try:
            sol = run_joint_optimization(cfg, channels, options)
            elapsed = 1000.0 * (time.perf_counter() - start)
            last = sol.trace[-1]
            record = ExperimentRecord(
                scheme=name, trial=trial, seed=seed, sweep_value=float(value),
                radar_snr_db=last["radar_snr_db"], min_sinr_db=last["min_sinr_db"],
                comm_residual=last["comm_residual"],
                selection_residual=last["selection_residual"],
                iterations=sol.iterations, wall_ms=elapsed,
            )
            if spec.kind == "convergence":
                record.trace = sol.trace
            if spec.kind == "beampattern":
                theta, psi = _beam_grids(spec)
                from .channel import assemble_composites
                comps = assemble_composites(channels, sol.rdars_state)
                sinrs = user_sinr(comps.h1, sol.beamformer.f, cfg.sigma1_sq_w)
                record.min_sinr_db = 10.0 * math.log10(float(np.min(sinrs)))
                record.beams = {
                    "bs": beampattern("BS", sol.beamformer.f, channels, sol.rdars_state,
                                      theta, spacing_ratio=cfg.spacing_ratio),
                    "rdars": beampattern("RDARS", sol.beamformer.f, channels, sol.rdars_state,
                                         theta, psi, spacing_ratio=cfg.spacing_ratio,
                                         upa_dims=(cfg.n1, cfg.n2)),
                    "theta": theta, "psi": psi,
                }
        except (OptimizationAborted, SinrInfeasibleError):
            elapsed = 1000.0 * (time.perf_counter() - start)
            record = ExperimentRecord(
                scheme=name, trial=trial, seed=seed, sweep_value=float(value),
                radar_snr_db=float("nan"), min_sinr_db=float("nan"),
                comm_residual=float("nan"), selection_residual=float("nan"),
                iterations=0, wall_ms=elapsed,
            )
        records.append(record)
    return records


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list:
    """Run the full (sweep value x trial x scheme) grid; infeasible runs
    yield NaN rows rather than aborting the sweep."""
    spec = spec.validate()
    cells = [(value, trial) for value in spec.grid for trial in range(spec.trials)]
    records: list = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for batch in pool.map(_run_cell, [spec] * len(cells),
                                  [c[0] for c in cells], [c[1] for c in cells]):
                records.extend(batch)
    else:
        for value, trial in cells:
            records.extend(_run_cell(spec, value, trial))
    records.sort(key=lambda r: (r.scheme, r.sweep_value, r.trial))
    return records


def _csv_cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _summarize(records: list) -> list:
    """Per (scheme, sweep value) mean and standard error of the dB metrics."""
    keys = sorted({(r.scheme, r.sweep_value) for r in records})
    out = []
    for scheme, value in keys:
        snrs = np.array([r.radar_snr_db for r in records
                         if r.scheme == scheme and r.sweep_value == value])
        ok = snrs[~np.isnan(snrs)]
        n = ok.size
        mean = float(np.mean(ok)) if n else float("nan")
        stderr = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out.append({
            "scheme": scheme,
            "sweep_value": value,
            "mean_radar_snr_db": mean,
            "stderr_radar_snr_db": stderr,
            "n_trials": int(snrs.size),
            "n_failed": int(np.isnan(snrs).sum()),
        })
    return out


def emit_outputs(records: list, out_dir, kind: str = "") -> list:
    """Write records.csv, timing.csv, summary.json and any per-run extras.

    Returns the list of written paths.  records.csv is byte-deterministic
    for a fixed (spec, master seed).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "records.csv"
    _write_csv(path, RECORD_FIELDS,
               [[getattr(r, f) for f in RECORD_FIELDS] for r in records])
    written.append(path)

    path = out / "timing.csv"
    _write_csv(path, ("scheme", "trial", "sweep_value", "wall_ms"),
               [[r.scheme, r.trial, r.sweep_value, r.wall_ms] for r in records])
    written.append(path)

    summary = {"kind": kind, "points": _summarize(records)}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    for rec in records:
        if rec.trace:
            path = out / f"trace_{rec.scheme}_{rec.trial}.csv"
            _write_csv(path, TRACE_FIELDS,
                       [[row[f] for f in TRACE_FIELDS] for row in rec.trace])
            written.append(path)
        if rec.beams:
            theta = rec.beams["theta"]
            path = out / f"beampattern_bs_{rec.scheme}_{rec.trial}.csv"
            _write_csv(path, ("theta_rad", "gain_db"),
                       [[float(t), float(g)] for t, g in zip(theta, rec.beams["bs"])])
            written.append(path)
            psi = rec.beams["psi"]
            rows = []
            for ti, t in enumerate(theta):
                for pi, p in enumerate(psi):
                    rows.append([float(t), float(p), float(rec.beams["rdars"][ti, pi])])
            path = out / f"beampattern_rdars_{rec.scheme}_{rec.trial}.csv"
            _write_csv(path, ("theta_rad", "psi_rad", "gain_db"), rows)
            written.append(path)
    return written


def make_spec(kind: str, config: SystemConfig | None = None, schemes=None,
              trials: int = 20, seed: int = 1, grid=None,
              preset: str = "desk") -> ExperimentSpec:
    """Convenience builder applying per-kind defaults."""
    if config is None:
        config = desk_config() if preset == "desk" else default_config()
    return ExperimentSpec(
        kind=kind,
        schemes=tuple(schemes) if schemes else default_schemes(kind),
        trials=trials,
        base_config=config,
        master_seed=seed,
        grid=tuple(grid) if grid else default_sweep_grid(kind),
    ).validate()
