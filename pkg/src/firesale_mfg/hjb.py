"""Backward sweep for the value function u(t, q, x).

Each time step solves the implicit relation

    u^k = u^{k+1} + dt * [ q (mu_ex + c_k) D_x u^k + 1/2 sigma_Q^2 Lap_q u^k
                           + 1/2 (sigma_A^2 + sigma_S^2 q^2) Lap_x u^k + H(u^k) ]

where ``c_k`` is the contagion contribution to the asset drift and ``H`` the
upwind numerical Hamiltonian. In regulated runs nodes outside the acceptance
region are pinned to ``k(t_k) (beta |q| + c)``.

Two inner iterations reach the same fixed point. ``"jacobi"`` applies the
right-hand side to the previous iterate, which diverges once
``dt * max(sigma_S^2 q^2) / dx^2`` exceeds roughly one half. ``"implicit"`` (the default)
keeps the linear part implicit through a sparse LU factorisation and only
lags the Hamiltonian; it is unconditionally stable for the linear terms.
The factorisation is built for a reference drift and reused across steps;
the residual drift difference is folded into the lagged right-hand side, so
the fixed point is unchanged. A new factorisation is made once the drift
moves far enough from the reference to slow the inner iteration noticeably.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InnerNonConvergence, NumericalBlowUp
from .grid_ops import Stencils, flatten, neg_part, operator_matrix, pos_part, unflatten
from .model import ScenarioConfig, acceptance_mask, boundary_values

log = logging.getLogger(__name__)


def floor_dx(d_x: np.ndarray, floor: float) -> np.ndarray:
    """Replace |D_x u| < floor by sign(D_x u) * floor (sign +1 at zero)."""
    small = np.abs(d_x) < floor
    if not small.any():
        return d_x
    return np.where(small, np.where(d_x < 0, -floor, floor), d_x)


def hamiltonian_from_stencils(st: Stencils, kappa: float, floor: float = 1e-8) -> np.ndarray:
    num = np.maximum(neg_part(st.D_qR) ** 2, pos_part(st.D_qL) ** 2)
    return num / (4 * kappa * floor_dx(st.D_x, floor))


def numerical_hamiltonian(u: np.ndarray, grid, kappa: float, floor: float = 1e-8) -> np.ndarray:
    """Upwind discretisation of (d_q u)^2 / (4 kappa d_x u) at every node.

    Non-increasing in the right difference and non-decreasing in the left one.
    """
    return hamiltonian_from_stencils(Stencils.of(u, grid), kappa, floor)


def optimal_control(u: np.ndarray, grid, kappa: float, floor: float = 1e-8) -> np.ndarray:
    """Trading rate D_q u / (2 kappa D_x u), for one slice or a stack of slices."""
    st = Stencils.of(u, grid)
    return st.D_q / (2 * kappa * floor_dx(st.D_x, floor))


@dataclass
class ValueFunctionSequence:
    u: np.ndarray  # (n_t+1, n_q+1, n_x+1)
    times: np.ndarray
    regulated: bool
    inner_iterations: np.ndarray = field(repr=False)
    stability_warnings: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.u)


class HJBSolver:
    """Holds the assembled operators for one scenario configuration."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        grid, p = config.grid, config.params
        self.grid = grid
        self.dt = config.dt
        self.q = grid.q[:, None]
        self.diff_q = 0.5 * p.sigma_Q**2
        self.diff_x = 0.5 * (p.sigma_A**2 + p.sigma_S**2 * self.q**2)
        self.mask = acceptance_mask(grid, p) if config.regulated else None
        if config.hjb_scheme == "implicit":
            n = grid.shape[0] * grid.shape[1]
            q_flat = flatten(np.broadcast_to(self.q, grid.shape))
            dx_flat = flatten(np.broadcast_to(self.diff_x, grid.shape))
            self._eye = sp.identity(n, format="csr")
            self._qDx = sp.diags(q_flat) @ operator_matrix("D_x", grid)
            self._diffusion = self.diff_q * operator_matrix("Lap_q", grid) + sp.diags(
                dx_flat
            ) @ operator_matrix("Lap_x", grid)
            if self.mask is not None:
                self._keep = sp.diags(flatten(self.mask).astype(float))
                self._qDx = self._keep @ self._qDx
                self._diffusion = self._keep @ self._diffusion
            self._lu = None
            self._lu_drift = None
            # refactor when dt*|drift - ref|*q_max/dx exceeds this (inner contraction factor)
            self._refactor_at = 0.05
            self._drift_scale = self.dt * max(abs(grid.q_min), abs(grid.q_max)) / grid.dx

    def terminal(self) -> np.ndarray:
        Q, X = self.grid.mesh()
        return X - self.config.params.gamma * Q**2

    def _boundary(self, t):
        cfg = self.config
        return boundary_values(t, self.grid, cfg.params, cfg.boundary_abs_q)

    def _rhs_terms(self, u, drift):
        st = Stencils.of(u, self.grid)
        p = self.config.params
        return (
            self.q * (p.mu_ex + drift) * st.D_x
            + self.diff_q * st.Lap_q
            + self.diff_x * st.Lap_x
            + hamiltonian_from_stencils(st, p.kappa, self.config.dx_floor)
        )

    def _factor(self, drift: float):
        if self._lu is None or abs(drift - self._lu_drift) * self._drift_scale > self._refactor_at:
            p = self.config.params
            # operator rows on pinned nodes are already zero, so those rows of M are identity rows
            M = self._eye - self.dt * ((p.mu_ex + drift) * self._qDx + self._diffusion)
            self._lu = splu(M.tocsc())
            self._lu_drift = drift
        return self._lu

    def step(self, u_next: np.ndarray, drift: float, t_k: float, k: int | None = None):
        """One backward step: returns (u^k, number of inner iterations, error trace)."""
        cfg = self.config
        p = cfg.params
        bvals = self._boundary(t_k) if self.mask is not None else None
        if cfg.hjb_scheme == "implicit":
            lu = self._factor(drift)
            shift = self.dt * (drift - self._lu_drift)
        u_prev = u_next
        errors = []
        for it in range(1, cfg.max_inner + 1):
            if cfg.hjb_scheme == "implicit":
                st = Stencils.of(u_prev, self.grid)
                rhs = u_next + self.dt * hamiltonian_from_stencils(st, p.kappa, cfg.dx_floor)
                if bvals is not None:
                    rhs = np.where(self.mask, rhs, bvals)
                rhs = flatten(rhs)
                if shift:
                    rhs = rhs + shift * (self._qDx @ flatten(u_prev))
                u_new = unflatten(lu.solve(rhs), self.grid)
            else:
                u_new = u_next + self.dt * self._rhs_terms(u_prev, drift)
                if bvals is not None:
                    u_new = np.where(self.mask, u_new, bvals)
            if not np.all(np.isfinite(u_new)):
                node = tuple(int(v) for v in np.argwhere(~np.isfinite(u_new))[0])
                raise NumericalBlowUp(f"value function not finite at step {k}", step=k, node=node)
            err = float(np.mean(np.abs(u_new - u_prev)))
            errors.append(err)
            u_prev = u_new
            if err <= cfg.inner_tol:
                return u_new, it, errors
        raise InnerNonConvergence(
            f"HJB inner iteration did not converge at step {k} (last error {err:.3e})",
            step=k,
            last_error=err,
        )

    def solve(self, drift_contrib) -> ValueFunctionSequence:
        """Backward sweep from the terminal slice; ``drift_contrib[k]`` drives step k."""
        cfg, grid = self.config, self.grid
        n_t = grid.n_t
        drift_contrib = np.asarray(drift_contrib, dtype=float)
        if drift_contrib.shape != (n_t,):
            raise ValueError(f"drift path must have {n_t} entries, got {drift_contrib.shape}")
        times = cfg.times
        u = np.empty((n_t + 1,) + grid.shape)
        u[n_t] = self.terminal()
        iters = np.zeros(n_t, dtype=int)
        warnings = []
        for k in range(n_t - 1, -1, -1):
            u[k], iters[k], errs = self.step(u[k + 1], drift_contrib[k], times[k], k)
            if len(errs) > 4 and np.any(np.diff(errs[3:]) > 0):
                warnings.append(k)
        if warnings:
            log.warning("HJB inner error not monotone after 3 iterates at %d steps", len(warnings))
        return ValueFunctionSequence(u, times, cfg.regulated, iters, warnings)


def hjb_inner_step(u_next, drift, t_k, config: ScenarioConfig):
    """Single backward step, convenience wrapper around :class:`HJBSolver`."""
    return HJBSolver(config).step(u_next, drift, t_k)[0]


def solve_backward(drift_contrib, config: ScenarioConfig) -> ValueFunctionSequence:
    return HJBSolver(config).solve(drift_contrib)
