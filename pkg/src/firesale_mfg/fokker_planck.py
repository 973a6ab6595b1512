"""Forward sweep for the population density m(t, q, x).

Each step is explicit in the frozen slice ``m^k``:

    m^{k+1} = m^k + dt * [ 1/2 sigma_Q^2 Lap_q m + 1/2 (sigma_A^2 + sigma_S^2 q^2) Lap_x m - F(u^k, m^k) ]

Only the contagion drift inside ``F`` depends on ``mu^k``, which is itself the
forward difference of the first inventory moment across the step. The step is
therefore a small fixed-point problem in the scalar ``mu^k``. In regulated runs
the density is set to zero outside the acceptance region after every iterate,
so mass leaving the region is absorbed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .contagion import DriftPath, contribution
from .errors import InnerNonConvergence, NumericalBlowUp
from .grid_ops import Stencils, moment_q, moment_x, neg_part, pos_part
from .hjb import floor_dx, optimal_control
from .model import ScenarioConfig, acceptance_mask, initial_density

log = logging.getLogger(__name__)


def _mixed(a_pos, a_neg, b_pos, b_neg, lap_qx):
    """max[a+ L+, b- L-] + min[b+ L-, a- L+] pattern shared by the two mixed blocks."""
    lp, ln = pos_part(lap_qx), neg_part(lap_qx)
    return np.maximum(a_pos * lp, b_neg * ln) + np.minimum(a_neg * lp, b_pos * ln)


def transport_parts(su: Stencils, sm: Stencils, m, q, kappa, floor=1e-8):
    """Drift-independent part of the transport term and the coefficient of the drift.

    Returns ``(F0, G)`` with ``F = F0 + (mu_ex + contribution + delta) * G``.
    Arrays broadcast over the slice; ``q`` has shape ``(n_q+1, 1)``.
    """
    dx_u = floor_dx(su.D_x, floor)
    rp, rn = pos_part(su.D_qR), neg_part(su.D_qR)
    lp, ln = pos_part(su.D_qL), neg_part(su.D_qL)

    # d_q(nu) m, with the upwinded product d_q u * d_qx u
    mixed_a = _mixed(rp, rn, lp, ln, su.Lap_qx)
    block_a = (su.Lap_q * su.D_x - mixed_a) / dx_u**2 * m / (2 * kappa)

    # nu d_q m, upwinded in the sign of d_q u
    grad = np.maximum(lp * pos_part(sm.D_qL), rn * neg_part(sm.D_qR)) + np.minimum(
        rp * neg_part(sm.D_qL), ln * pos_part(sm.D_qR)
    )
    block_b = grad / (2 * kappa * dx_u)

    # d_x of -(d_q u)^2 / (4 kappa (d_x u)^2), split into its two product-rule pieces
    mixed_d = _mixed(lp, ln, rp, rn, su.Lap_qx)
    block_d = -2 * dx_u**2 * mixed_d / (4 * kappa * dx_u**4) * m
    ham = np.maximum(rn**2, lp**2)
    block_e = ham * 2 * dx_u * su.Lap_x / (4 * kappa * dx_u**4) * m
    block_f = -np.maximum(ln**2, rp**2) / (4 * kappa * dx_u**2) * sm.D_x

    return block_a + block_b + block_d + block_e + block_f, q * sm.D_x


def transport_term(u, m, grid, params, contrib=0.0, delta=0.0, floor=1e-8):
    """Full discrete transport term ``F`` on one slice (``contrib`` is the contagion part)."""
    su, sm = Stencils.of(u, grid), Stencils.of(m, grid)
    F0, G = transport_parts(su, sm, m, grid.q[:, None], params.kappa, floor)
    return F0 + (params.mu_ex + contrib + delta) * G


@dataclass
class PopulationDiagnostics:
    """Per-step population summaries; ``liquidation_intensity`` has ``n_t`` entries, the rest ``n_t + 1``."""

    times: np.ndarray
    mass: np.ndarray
    liquidation_intensity: np.ndarray
    mean_q: np.ndarray  # raw first moments
    mean_x: np.ndarray
    mean_q_surviving: np.ndarray  # divided by surviving mass
    mean_x_surviving: np.ndarray
    trading_rate: np.ndarray  # <m, nu*>, n_t entries
    min_density: float
    negativity_breaches: int
    cfl: float
    cfl_flag: bool
    inner_iterations: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        lam = self.liquidation_intensity
        k = int(np.argmax(lam))
        return {
            "final_mass": float(self.mass[-1]),
            "peak_liquidation_intensity": float(lam[k]),
            "peak_liquidation_time": float(self.times[k]),
            "min_density": float(self.min_density),
            "negativity_breaches": int(self.negativity_breaches),
            "cfl": float(self.cfl),
            "cfl_flag": bool(self.cfl_flag),
        }


@dataclass
class DensitySequence:
    m: np.ndarray  # (n_t+1, n_q+1, n_x+1)
    times: np.ndarray
    regulated: bool

    def __len__(self):
        return len(self.m)


class FPSolver:
    """Forward solver bound to one scenario configuration."""

    def __init__(self, config: ScenarioConfig, neg_tol: float | None = None):
        self.config = config
        grid, p = config.grid, config.params
        self.grid = grid
        self.dt = config.dt
        self.q = grid.q[:, None]
        self.diff_q = 0.5 * p.sigma_Q**2
        self.diff_x = 0.5 * (p.sigma_A**2 + p.sigma_S**2 * self.q**2)
        self.mask = acceptance_mask(grid, p) if config.regulated else None
        self.neg_tol = neg_tol

    def initial(self) -> np.ndarray:
        cfg = self.config
        return initial_density(cfg.initial, self.grid, self.mask, cfg.mass_floor)

    def _prepare(self, m_k, u_k):
        """Drift-independent update ``base`` and drift coefficient ``coef`` for one step."""
        cfg, p = self.config, self.config.params
        su, sm = Stencils.of(u_k, self.grid), Stencils.of(m_k, self.grid)
        F0, G = transport_parts(su, sm, m_k, self.q, p.kappa, cfg.dx_floor)
        base = m_k + self.dt * (self.diff_q * sm.Lap_q + self.diff_x * sm.Lap_x - F0)
        coef = -self.dt * G
        base = base + (p.mu_ex + cfg.delta) * coef
        if self.mask is not None:
            base = np.where(self.mask, base, 0.0)
            coef = np.where(self.mask, coef, 0.0)
        return base, coef

    def step(self, m_k, u_k, mu_guess: float = 0.0, active: float = 0.0, k=None):
        """Advance one step; returns ``(m^{k+1}, mu^k, inner iterations)``."""
        cfg, p, grid = self.config, self.config.params, self.grid
        base, coef = self._prepare(m_k, u_k)
        mq_k = moment_q(m_k, grid)
        mu = float(mu_guess)
        m_prev = None
        err = np.inf
        for it in range(1, cfg.max_inner + 1):
            m_new = base + contribution(p, mu, active) * coef
            if not np.all(np.isfinite(m_new)):
                node = tuple(int(v) for v in np.argwhere(~np.isfinite(m_new))[0])
                raise NumericalBlowUp(f"density not finite at step {k}", step=k, node=node)
            mu = (moment_q(m_new, grid) - mq_k) / self.dt
            if m_prev is not None:
                err = float(np.mean(np.abs(m_new - m_prev)))
                if err <= cfg.inner_tol:
                    return m_new, mu, it
            m_prev = m_new
        raise InnerNonConvergence(
            f"density inner iteration did not converge at step {k} (last error {err:.3e})",
            step=k,
            last_error=err,
        )

    def solve(self, u_seq, mu_guess=None, m0=None):
        """March from ``m0`` (default: the configured initial density) through all steps.

        ``mu_guess`` seeds the per-step drift iteration, typically the previous outer path.
        """
        cfg, grid = self.config, self.grid
        n_t, dt = grid.n_t, self.dt
        p = cfg.params
        u_seq = np.asarray(u_seq)
        m = np.empty((n_t + 1,) + grid.shape)
        m[0] = self.initial() if m0 is None else m0
        neg_tol = self.neg_tol if self.neg_tol is not None else 1e-8 * float(m[0].max())
        mu = np.zeros(n_t)
        active = np.zeros(n_t)
        iters = np.zeros(n_t, dtype=int)
        nu = np.empty(grid.shape)
        for k in range(n_t):
            nu = optimal_control(u_seq[k], grid, p.kappa, cfg.dx_floor)
            active[k] = float((nu * m[k]).sum() * grid.dq * grid.dx)
            guess = 0.0 if mu_guess is None else mu_guess[k]
            m[k + 1], mu[k], iters[k] = self.step(m[k], u_seq[k], guess, active[k], k)
        path = DriftPath.from_mu_active(mu, active)
        diag = self.diagnostics(m, u_seq, path, iters, neg_tol)
        return DensitySequence(m, cfg.times, cfg.regulated), path, diag

    def cfl_number(self, u_seq, path: DriftPath) -> float:
        """dt * (diffusion numbers + drift Courant numbers), maximised over steps."""
        cfg, grid, p = self.config, self.grid, self.config.params
        diff = self.dt * (p.sigma_Q**2 / grid.dq**2 + float(np.max(2 * self.diff_x)) / grid.dx**2)
        qmax = float(np.max(np.abs(grid.q)))
        contrib = np.array([contribution(p, a, b) for a, b in zip(path.mu, path.active)])
        drift_x = self.dt * qmax * float(np.max(np.abs(p.mu_ex + contrib + cfg.delta))) / grid.dx
        # trading-rate Courant number over nodes where the density lives
        region = self.mask if self.mask is not None else np.ones(grid.shape, bool)
        nu_max = 0.0
        for k in range(0, grid.n_t, max(1, grid.n_t // 50)):
            nu = optimal_control(u_seq[k], grid, p.kappa, cfg.dx_floor)
            nu_max = max(nu_max, float(np.max(np.abs(nu[region]))))
        return diff + drift_x + self.dt * nu_max / grid.dq

    def diagnostics(self, m, u_seq, path, iters, neg_tol) -> PopulationDiagnostics:
        grid, dt = self.grid, self.dt
        mass = m.sum(axis=(1, 2)) * grid.dq * grid.dx
        mq = np.array([moment_q(s, grid) for s in m])
        mx = np.array([moment_x(s, grid) for s in m])
        with np.errstate(divide="ignore", invalid="ignore"):
            mq_s = np.where(mass > 0, mq / mass, np.nan)
            mx_s = np.where(mass > 0, mx / mass, np.nan)
        min_m = float(m.min())
        breaches = int(np.sum(m.min(axis=(1, 2)) < -neg_tol))
        if breaches:
            log.debug(
                "density undershoot below -%.3g at %d steps (min %.3g)", neg_tol, breaches, min_m
            )
        cfl = self.cfl_number(u_seq, path)
        if cfl > 1:
            log.debug("explicit density step has CFL number %.3f > 1", cfl)
        return PopulationDiagnostics(
            times=self.config.times,
            mass=mass,
            liquidation_intensity=-np.diff(mass) / dt,
            mean_q=mq,
            mean_x=mx,
            mean_q_surviving=mq_s,
            mean_x_surviving=mx_s,
            trading_rate=path.active.copy(),
            min_density=min_m,
            negativity_breaches=breaches,
            cfl=cfl,
            cfl_flag=cfl > 1,
            inner_iterations=iters,
        )


def fp_inner_step(m_prev, u_slice, t_k, config: ScenarioConfig, mu_guess=0.0, active=None):
    """One forward step from slice ``m_prev``; returns ``(m_next, mu_k)``.

    ``t_k`` is accepted for symmetry with the backward step; the update is autonomous.
    """
    solver = FPSolver(config)
    if active is None:
        nu = optimal_control(u_slice, config.grid, config.params.kappa, config.dx_floor)
        active = float((nu * m_prev).sum() * config.grid.dq * config.grid.dx)
    m_next, mu, _ = solver.step(np.asarray(m_prev, float), np.asarray(u_slice, float), mu_guess, active)
    return m_next, mu


def solve_forward(u_seq, config: ScenarioConfig, m0=None, mu_guess=None):
    """Density sequence, drift path and diagnostics for a given value-function sequence."""
    u = u_seq.u if hasattr(u_seq, "u") else u_seq
    return FPSolver(config).solve(u, mu_guess=mu_guess, m0=m0)
