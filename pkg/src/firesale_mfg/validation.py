"""Comparison of unregulated equilibria against the closed-form solution."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .closed_form import ClosedFormSolution
from .coupler import control_sequence, picard_solve
from .model import GridSpec, ScenarioConfig

# finest-level bars: relative sup error of u, and sup drift error over max |mu_bar|
U_REL_BAR = 0.02
MU_REL_BAR = 0.05


def refinement_grids(base: GridSpec, levels: int) -> list[GridSpec]:
    """Halve dq and dx per level and quarter dt, so dt/dx^2 stays fixed.

    The density step is explicit; refining dt only linearly would push it
    past its stability limit after a level or two.
    """
    return [
        dataclasses.replace(base, n_t=base.n_t * 4**lv, n_q=base.n_q * 2**lv, n_x=base.n_x * 2**lv)
        for lv in range(levels)
    ]


@dataclass
class LevelErrors:
    grid: GridSpec
    status: str
    outer_iterations: int
    u_linf: float = float("nan")
    u_rel: float = float("nan")
    u_l1: float = float("nan")
    nu_linf: float = float("nan")
    mu_linf: float = float("nan")
    mu_rel: float = float("nan")
    mass_dev: float = float("nan")

    def row(self) -> dict:
        g = self.grid
        d = {k: v for k, v in self.__dict__.items() if k != "grid"}
        d.update(n_t=g.n_t, n_q=g.n_q, n_x=g.n_x)
        return d


@dataclass
class ValidationReport:
    scenario: object
    levels: list = field(default_factory=list)
    orders: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(lv.status == "converged" for lv in self.levels)

    @property
    def monotone(self) -> bool:
        e = [lv.u_linf for lv in self.levels]
        return all(b < a for a, b in zip(e, e[1:]))

    @property
    def thresholds_met(self) -> bool:
        fin = self.levels[-1]
        return fin.u_rel <= U_REL_BAR and fin.mu_rel <= MU_REL_BAR

    @property
    def passed(self) -> bool:
        return self.all_converged and self.monotone and self.thresholds_met

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "levels": [lv.row() for lv in self.levels],
            "orders_u_linf": self.orders,
            "all_converged": self.all_converged,
            "monotone": self.monotone,
            "thresholds_met": self.thresholds_met,
            "bars": {"u_rel": U_REL_BAR, "mu_rel": MU_REL_BAR},
            "passed": self.passed,
        }


def level_errors(config: ScenarioConfig, E0: float | None = None) -> LevelErrors:
    """Solve one unregulated configuration and measure it against the closed form."""
    cfg = config.replace(regulated=False)
    res = picard_solve(cfg)
    out = LevelErrors(cfg.grid, res.status, res.iterations)
    if res.u is None:
        return out
    E0 = cfg.initial.mean[0] if E0 is None else E0
    cf = ClosedFormSolution(cfg.params, E0)
    t = cfg.times
    u_ref = cf.value_on_grid(t, cfg.grid)
    err = np.abs(res.u.u - u_ref)
    Q, X = cfg.grid.mesh()
    nu_ref = np.stack([cf.value_and_strategy(tk, Q, X)[1] for tk in t])
    mu_ref = np.asarray(cf.contagion(t[:-1]))
    out.u_linf = float(err.max())
    out.u_rel = float(err.max() / np.abs(u_ref).max())
    out.u_l1 = float(err.mean())
    out.nu_linf = float(np.abs(control_sequence(res) - nu_ref).max())
    out.mu_linf = float(np.abs(res.path.mu - mu_ref).max())
    out.mu_rel = out.mu_linf / max(float(np.abs(mu_ref).max()), 1e-300)
    out.mass_dev = float(np.abs(res.diagnostics.mass - 1).max())
    return out


def validate(config: ScenarioConfig, levels: int = 1, base_grid: GridSpec | None = None) -> ValidationReport:
    base = base_grid or config.grid
    report = ValidationReport(config.id)
    for g in refinement_grids(base, levels):
        report.levels.append(level_errors(config.replace(grid=g)))
    e = [lv.u_linf for lv in report.levels]
    report.orders = [float(np.log2(a / b)) if b > 0 else float("inf") for a, b in zip(e, e[1:])]
    return report
