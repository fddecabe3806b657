"""Build the six experiment figures from a directory of simulator outputs.

A run directory is one harness output (records.csv + summary.json + any
trace/beampattern files); ``render_figures`` also accepts a parent directory
whose children are run directories, rendering one image per experiment kind
found.  Axis semantics are contractual: dB on SNR axes, dBm on power axes,
radians on angle axes.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reading import (
    SchemaError,
    read_beampattern_bs,
    read_beampattern_rdars,
    read_records,
    read_summary,
    read_trace,
)

SWEEP_AXIS = {
    "power": "transmit power (dBm)",
    "fixed-vs-opt-A": "transmit power (dBm)",
    "elements": "total surface elements",
    "sinr": "SINR threshold (dB)",
}


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    run_dir: Path
    output: Path


def _mean_by_scheme(records) -> dict:
    """Per-scheme (sweep values, mean radar SNR, standard error) triples."""
    out = {}
    schemes = sorted(set(records["scheme"]))
    for scheme in schemes:
        mask = np.array([s == scheme for s in records["scheme"]])
        values = np.unique(records["sweep_value"][mask])
        means, errs = [], []
        for value in values:
            sel = mask & (records["sweep_value"] == value)
            snr = records["radar_snr_db"][sel]
            snr = snr[~np.isnan(snr)]
            means.append(np.mean(snr) if snr.size else np.nan)
            errs.append(np.std(snr, ddof=1) / np.sqrt(snr.size) if snr.size > 1 else 0.0)
        out[scheme] = (values, np.array(means), np.array(errs))
    return out


def build_sweep_figure(kind: str, records) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for scheme, (values, means, errs) in _mean_by_scheme(records).items():
        ax.errorbar(values, means, yerr=errs, marker="o", capsize=3, label=scheme)
    ax.set_xlabel(SWEEP_AXIS[kind])
    ax.set_ylabel("radar output SNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def build_convergence_figure(run_dir: Path) -> plt.Figure:
    traces = sorted(run_dir.glob("trace_*.csv"))
    if not traces:
        raise SchemaError(f"{run_dir}: no trace_*.csv files for the convergence figure")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for path in traces:
        data = read_trace(path)
        label = path.stem[len("trace_"):]
        ax.plot(data["iter"], data["radar_snr_db"], marker=".", label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("radar output SNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def build_beampattern_figure(run_dir: Path) -> plt.Figure:
    bs_files = sorted(run_dir.glob("beampattern_bs_*.csv"))
    rdars_files = sorted(run_dir.glob("beampattern_rdars_*.csv"))
    if not bs_files or not rdars_files:
        raise SchemaError(f"{run_dir}: missing beampattern_bs/beampattern_rdars CSV files")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11.0, 4.2))
    for path in bs_files:
        data = read_beampattern_bs(path)
        ax1.plot(data["theta_rad"], data["gain_db"], label=path.stem[len("beampattern_bs_"):])
    ax1.set_xlabel("azimuth angle (rad)")
    ax1.set_ylabel("beampattern gain (dB)")
    ax1.grid(True, alpha=0.3)
    ax1.legend(fontsize=8)
    grid = read_beampattern_rdars(rdars_files[0])
    mesh = ax2.pcolormesh(grid["psi_rad"], grid["theta_rad"], grid["gain_db"],
                          shading="auto", cmap="viridis")
    ax2.set_xlabel("elevation angle (rad)")
    ax2.set_ylabel("azimuth angle (rad)")
    fig.colorbar(mesh, ax=ax2, label="beampattern gain (dB)")
    fig.tight_layout()
    return fig


def build_figure(kind: str, run_dir) -> plt.Figure:
    run_dir = Path(run_dir)
    if kind == "convergence":
        return build_convergence_figure(run_dir)
    if kind == "beampattern":
        return build_beampattern_figure(run_dir)
    if kind in SWEEP_AXIS:
        return build_sweep_figure(kind, read_records(run_dir / "records.csv"))
    raise SchemaError(f"unknown experiment kind {kind!r}")


def _discover_runs(run_dir: Path) -> list:
    """(kind, directory) pairs for run_dir itself or its child run directories."""
    found = []
    candidates = [run_dir] + sorted(p for p in run_dir.iterdir() if p.is_dir())
    for cand in candidates:
        summary = cand / "summary.json"
        if summary.exists():
            kind = read_summary(summary).get("kind", "")
            if kind:
                found.append((kind, cand))
    return found


def render_figures(run_dir, out_dir) -> list:
    """Render one image per experiment kind found under run_dir.

    Returns the written image paths; raises SchemaError when a referenced
    CSV is missing, empty, or has unexpected columns.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    if not run_dir.exists():
        raise SchemaError(f"{run_dir}: run directory not found")
    runs = _discover_runs(run_dir)
    if not runs:
        raise SchemaError(f"{run_dir}: no summary.json found in it or its children")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind, directory in runs:
        fig = build_figure(kind, directory)
        path = out_dir / f"{kind}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) != 2:
        print("usage: render_figures <run_dir> <out_dir>", file=sys.stderr)
        return 2
    try:
        written = render_figures(argv[0], argv[1])
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
