"""Write a solved run to a directory of CSV/binary/JSON artifacts plus a manifest."""

from __future__ import annotations

import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import io
from .contagion import effective_drift
from .coupler import EquilibriumResult, boundary_flux_path, control_sequence
from .model import dump_scenarios

SECTION_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_Q_ANCHOR = 7.0
DEFAULT_X_ANCHOR = 32.0


def nearest_index(values, target) -> int:
    return int(np.argmin(np.abs(np.asarray(values) - target)))


def time_indices(times, fractions, T):
    return [nearest_index(times, f * T) for f in fractions]


def section_label(name: str, t: float) -> str:
    return f"{name}@t={io.fmt(round(t, 10))}"


def write_sections(out_dir, result: EquilibriumResult, q_anchor, x_anchor, fractions=SECTION_TIMES):
    """u and nu* along x at fixed q and along q at fixed x, at several times."""
    cfg = result.config
    grid = cfg.grid
    times = cfg.times
    nu = control_sequence(result)
    ks = time_indices(times, fractions, cfg.params.T)
    i = nearest_index(grid.q, q_anchor)
    j = nearest_index(grid.x, x_anchor)
    by_x = {"x": grid.x}
    by_q = {"q": grid.q}
    for k in ks:
        by_x[section_label("u", times[k])] = result.u.u[k][i, :]
        by_x[section_label("nu", times[k])] = nu[k][i, :]
        by_q[section_label("u", times[k])] = result.u.u[k][:, j]
        by_q[section_label("nu", times[k])] = nu[k][:, j]
    qa, xa = io.fmt(grid.q[i]), io.fmt(grid.x[j])
    p1 = io.write_columns(Path(out_dir) / f"section_q{qa}.csv", by_x)
    p2 = io.write_columns(Path(out_dir) / f"section_x{xa}.csv", by_q)
    return p1, p2, float(grid.q[i]), float(grid.x[j])


def write_run(result: EquilibriumResult, out_dir, q_anchor=DEFAULT_Q_ANCHOR, x_anchor=DEFAULT_X_ANCHOR, binary=True):
    """Write every artifact of ``result`` into ``out_dir``; returns the layout dict.

    Failed runs without a solution still get the report, configuration and trace.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    grid, p = cfg.grid, cfg.params
    layout = {}

    with open(out / "config.yaml", "w") as fh:
        dump_scenarios([cfg], fh)
    layout["config"] = "config.yaml"

    io.write_table(
        out / "convergence.csv",
        ["iteration", "error", "error_u", "error_m", "rel_error_u", "rel_error_m"],
        [(it.iteration, it.error, it.error_u, it.error_m, it.rel_error_u, it.rel_error_m) for it in result.trace],
    )
    layout["convergence"] = "convergence.csv"

    # failure reports always carry the last drift paths
    io.write_json(out / "report.json", result.report())
    layout["report"] = "report.json"

    if result.u is None or result.m is None:
        return layout

    t = cfg.times[:-1]
    d, path = result.diagnostics, result.path
    io.write_columns(
        out / "diagnostics.csv",
        {
            "t": t,
            "mass": d.mass[:-1],
            "liquidation_intensity": d.liquidation_intensity,
            "mean_q": d.mean_q[:-1],
            "mean_x": d.mean_x[:-1],
            "mean_q_surviving": d.mean_q_surviving[:-1],
            "mean_x_surviving": d.mean_x_surviving[:-1],
            "mu": path.mu,
            "active": path.active,
            "liquidation": path.liquidation,
        },
    )
    layout["diagnostics"] = "diagnostics.csv"

    flux = boundary_flux_path(result.m.m, grid, p) if cfg.regulated else np.zeros(grid.n_t)
    io.write_columns(
        out / "drift.csv",
        {
            "t": t,
            "mu": path.mu,
            "active": path.active,
            "liquidation": path.liquidation,
            "contribution": effective_drift(path, p),
            "boundary_flux": flux,
        },
    )
    layout["drift"] = "drift.csv"

    io.write_field_csv(out / "density_t0.csv", result.m.m[0], grid.q, grid.x)
    io.write_field_csv(out / "density_tT.csv", result.m.m[-1], grid.q, grid.x)
    layout["density"] = ["density_t0.csv", "density_tT.csv"]
    if binary:
        io.write_binary(out / "u_t0.bin", result.u.u[0])
        io.write_binary(out / "m_tT.bin", result.m.m[-1])
        layout["snapshots"] = ["u_t0.bin", "m_tT.bin"]

    s1, s2, qa, xa = write_sections(out, result, q_anchor, x_anchor)
    layout["sections"] = [s1.name, s2.name]
    layout["anchors"] = {"q": qa, "x": xa}
    return layout


def write_manifest(out_dir, result: EquilibriumResult, layout: dict, timings: dict | None = None):
    cfg = result.config
    p = cfg.params
    if p.split_mode:
        contagion = {"mode": "split", "alpha_active": p.alpha_active, "alpha_liq": p.alpha_liq}
    else:
        contagion = {"mode": "single", "alpha": p.alpha}
    manifest = {
        "scenario": cfg.id,
        "config_hash": cfg.config_hash(),
        "regulated": cfg.regulated,
        "status": result.status,
        "contagion": contagion,
        "boundary": {"beta": p.beta, "c": p.c},
        "grid": {"n_t": cfg.grid.n_t, "n_q": cfg.grid.n_q, "n_x": cfg.grid.n_x},
        "layout": layout,
        "artifacts": io.artifact_entries(out_dir),
        "versions": {
            "firesale_mfg": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seeds": None,
        "timings": timings or {"solve_seconds": round(result.elapsed, 3)},
    }
    io.write_json(Path(out_dir) / io.MANIFEST_NAME, manifest)
    return manifest


def refresh_manifest(out_dir):
    """Re-list artifacts after files were added to an existing run directory."""
    path = Path(out_dir) / io.MANIFEST_NAME
    manifest = io.read_json(path)
    manifest["artifacts"] = io.artifact_entries(out_dir)
    io.write_json(path, manifest)
    return manifest
