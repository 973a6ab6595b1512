"""Static SVG figures rendered from the CSV artifacts of a run directory.

Output is byte-stable for identical inputs: the SVG id salt is fixed and the
date metadata is dropped.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402

BOUNDARY_GID = "acceptance-boundary"
_STYLE = {"svg.hashsalt": "firesale-mfg", "svg.fonttype": "path", "figure.dpi": 100}


def _save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _require(run_dir: Path, name: str) -> Path:
    p = run_dir / name
    if not p.exists():
        raise FileNotFoundError(f"missing artifact {name} in {run_dir}")
    return p


def boundary_polyline(q, beta, c, x_max=None):
    """Points of x = beta*|q| + c over the q range (an extra vertex at q=0 keeps the kink)."""
    q = np.asarray(q, dtype=float)
    qs = np.unique(np.concatenate([q, [0.0]] if q.min() < 0 < q.max() else [q]))
    xs = beta * np.abs(qs) + c
    if x_max is not None:
        keep = xs <= x_max
        qs, xs = qs[keep], xs[keep]
    return qs, xs


def plot_summary(diag: dict, drift: dict, path):
    t = diag["t"]
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(5, 1, figsize=(6, 11), sharex=True)
        axes[0].plot(t, diag["mass"])
        axes[0].set_ylabel("mass")
        axes[1].plot(t, diag["liquidation_intensity"], color="tab:red")
        axes[1].set_ylabel("liquidation\nintensity")
        axes[2].plot(t, diag["mean_q_surviving"])
        axes[2].set_ylabel("mean q\n(surviving)")
        axes[3].plot(t, diag["mean_x_surviving"])
        axes[3].set_ylabel("mean x\n(surviving)")
        axes[4].plot(t, drift["mu"], label="mu")
        axes[4].plot(t, drift["active"], "--", label="active")
        axes[4].plot(t, drift["liquidation"], ":", label="liquidation")
        axes[4].set_ylabel("contagion")
        axes[4].legend(loc="best", fontsize=8)
        axes[4].set_xlabel("t")
        fig.tight_layout()
    return _save(fig, path)


def plot_liquidation(diag: dict, path):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(diag["t"], diag["liquidation_intensity"], color="tab:red")
        ax.set_xlabel("t")
        ax.set_ylabel("liquidation intensity")
        fig.tight_layout()
    return _save(fig, path)


def plot_sections(table: dict, coord: str, anchor_label: str, path):
    """Two panels (nu*, u) with one curve per time column of a section CSV."""
    xs = table[coord]
    with plt.rc_context(_STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 7), sharex=True)
        for name, col in table.items():
            if name.startswith("nu@"):
                a1.plot(xs, col, label=name[3:])
            elif name.startswith("u@"):
                a2.plot(xs, col, label=name[2:])
        a1.set_ylabel(f"nu* ({anchor_label})")
        a2.set_ylabel(f"u ({anchor_label})")
        a2.set_xlabel(coord)
        a1.legend(fontsize=8)
        fig.tight_layout()
    return _save(fig, path)


def plot_density_pair(m0, mT, q, x, beta, c, path, regulated=True):
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
        for ax, field, title in zip(axes, (m0, mT), ("t = 0", "t = T")):
            cs = ax.contourf(q, x, field.T, levels=12, cmap="viridis")
            fig.colorbar(cs, ax=ax)
            if regulated:
                bq, bx = boundary_polyline(q, beta, c, x_max=float(x[-1]))
                (line,) = ax.plot(bq, bx, color="white", lw=1.5)
                line.set_gid(BOUNDARY_GID)
            ax.set_title(title)
            ax.set_xlabel("q")
        axes[0].set_ylabel("x")
        fig.tight_layout()
    return _save(fig, path)


def render_run(run_dir) -> list[Path]:
    """Render every figure of a run directory; requires its manifest and CSVs."""
    run_dir = Path(run_dir)
    manifest = io.read_json(_require(run_dir, io.MANIFEST_NAME))
    layout = manifest.get("layout", {})
    if "diagnostics" not in layout:
        raise FileNotFoundError(f"{run_dir} holds no solution (status {manifest.get('status')})")
    diag = io.read_table(_require(run_dir, layout["diagnostics"]))
    drift = io.read_table(_require(run_dir, layout["drift"]))
    out = [
        plot_summary(diag, drift, run_dir / "summary.svg"),
        plot_liquidation(diag, run_dir / "liquidation.svg"),
    ]
    anchors = layout.get("anchors", {})
    sec_q, sec_x = layout["sections"]
    out.append(
        plot_sections(io.read_table(_require(run_dir, sec_q)), "x", f"q={anchors.get('q')}", run_dir / "sections_fixed_q.svg")
    )
    out.append(
        plot_sections(io.read_table(_require(run_dir, sec_x)), "q", f"x={anchors.get('x')}", run_dir / "sections_fixed_x.svg")
    )
    m0, q, x = io.read_field_csv(_require(run_dir, layout["density"][0]))
    mT, _, _ = io.read_field_csv(_require(run_dir, layout["density"][1]))
    b = manifest["boundary"]
    out.append(
        plot_density_pair(m0, mT, q, x, b["beta"], b["c"], run_dir / "density.svg", manifest.get("regulated", True))
    )
    return out
