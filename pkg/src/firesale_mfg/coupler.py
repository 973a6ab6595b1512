"""Picard outer loop: alternate backward and forward sweeps until the pair stops moving."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .contagion import DriftPath, damping_control, effective_drift
from .errors import NumericalBlowUp, SolverError
from .fokker_planck import DensitySequence, FPSolver, PopulationDiagnostics
from .grid_ops import moment_q
from .hjb import HJBSolver, ValueFunctionSequence, optimal_control
from .model import ScenarioConfig

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_OUTER = "max_outer"
BLOW_UP = "blow_up"
INNER_FAILURE = "inner_nonconvergence"


@dataclass
class OuterIterate:
    iteration: int
    error: float
    error_u: float
    error_m: float
    rel_error_u: float
    rel_error_m: float
    seconds: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EquilibriumResult:
    config: ScenarioConfig
    status: str
    u: ValueFunctionSequence | None
    m: DensitySequence | None
    path: DriftPath | None
    diagnostics: PopulationDiagnostics | None
    trace: list = field(default_factory=list)
    message: str = ""
    elapsed: float = 0.0
    # drift paths of the last two completed outer iterations, oldest first
    last_paths: list = field(default_factory=list, repr=False)
    failed_step: int | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def final_error(self) -> float:
        return self.trace[-1].error if self.trace else float("nan")

    @property
    def oscillation_amplitude(self) -> float:
        """max |mu| difference between the last two drift paths (nan if fewer than two)."""
        if len(self.last_paths) < 2:
            return float("nan")
        return float(np.max(np.abs(self.last_paths[-1].mu - self.last_paths[-2].mu)))

    def report(self, include_paths: bool | None = None) -> dict:
        """Machine-readable run summary. Drift paths are included by default on failure."""
        if include_paths is None:
            include_paths = not self.converged
        out = {
            "scenario": self.config.id,
            "config_hash": self.config.config_hash(),
            "regulated": self.config.regulated,
            "status": self.status,
            "converged": self.converged,
            "outer_iterations": self.iterations,
            "final_error": self.final_error,
            "outer_tol": self.config.outer_tol,
            "theta": self.config.theta,
            "message": self.message,
            "failed_step": self.failed_step,
            "elapsed_seconds": round(self.elapsed, 3),
            "oscillation_amplitude": self.oscillation_amplitude,
            "trace": [it.as_dict() for it in self.trace],
        }
        if self.diagnostics is not None:
            out["diagnostics"] = self.diagnostics.summary()
        if include_paths:
            out["last_drift_paths"] = [p.mu.tolist() for p in self.last_paths]
        return out


def contagion_split(m_seq, nu_seq, grid, dt) -> DriftPath:
    """Drift path from a density sequence and the matching control fields.

    ``mu`` is the forward difference of the first inventory moment, ``active`` the
    population-average trading rate, ``liquidation`` the residual.
    """
    m_seq = np.asarray(m_seq)
    cell = grid.dq * grid.dx
    moments = np.array([moment_q(s, grid) for s in m_seq])
    mu = np.diff(moments) / dt
    active = np.array([(np.asarray(nu_seq[k]) * m_seq[k]).sum() * cell for k in range(len(mu))])
    return DriftPath.from_mu_active(mu, active)


def boundary_flux_contribution(m_slice, grid, params) -> float:
    """Absorption term of d/dt <m, q> from the density gradient at the boundary of A.

    Uses m = 0 on the boundary, so the tangential derivative vanishes and the
    co-normal flux reduces to a multiple of d_x m, taken one-sided at the first
    node inside A in every q column. Serves as a cross-check of ``liquidation``.
    """
    q, x = grid.q, grid.x
    beta, c = params.beta, params.c
    total = 0.0
    for i, qi in enumerate(q):
        inside = np.nonzero(x > beta * abs(qi) + c)[0]
        if len(inside) == 0:
            continue
        j = inside[0]
        gap = x[j] - (beta * abs(qi) + c)
        dmx = m_slice[i, j] / gap if gap > 0.5 * grid.dx else m_slice[i, j] / grid.dx
        coeff = params.sigma_Q**2 * beta**2 + params.sigma_A**2 + params.sigma_S**2 * qi**2
        total += -0.5 * qi * coeff * dmx * grid.dq
    return total


def boundary_flux_path(m_seq, grid, params) -> np.ndarray:
    return np.array([boundary_flux_contribution(s, grid, params) for s in np.asarray(m_seq)[:-1]])


def _initial_guess(config: ScenarioConfig, hjb: HJBSolver, fp: FPSolver):
    n = config.grid.n_t + 1
    u = np.broadcast_to(hjb.terminal(), (n,) + config.grid.shape)
    m = np.broadcast_to(fp.initial(), (n,) + config.grid.shape)
    return u, m


def picard_solve(config: ScenarioConfig, path0: DriftPath | None = None, callback=None) -> EquilibriumResult:
    """Equilibrium of the coupled system by damped Picard iteration.

    Non-convergence (iteration cap, blow-up, inner failure) is returned as a
    status on the result, never raised. ``callback(iterate, path)`` is invoked
    after every outer iteration.
    """
    t_start = time.perf_counter()
    grid, p = config.grid, config.params
    hjb, fp = HJBSolver(config), FPSolver(config)
    u_old, m_old = _initial_guess(config, hjb, fp)
    path = path0.copy() if path0 is not None else DriftPath.zeros(grid.n_t)
    trace: list[OuterIterate] = []
    last_paths: list[DriftPath] = []
    u_seq = dens = diag = raw = None
    status, message, failed = MAX_OUTER, "", None

    for it in range(1, config.max_outer + 1):
        t0 = time.perf_counter()
        try:
            u_seq = hjb.solve(effective_drift(path, p))
            dens, raw, diag = fp.solve(u_seq.u, mu_guess=path.mu)
        except SolverError as exc:
            status = BLOW_UP if isinstance(exc, NumericalBlowUp) else INNER_FAILURE
            message, failed = str(exc), exc.step
            log.warning("outer iteration %d failed: %s", it, exc)
            break
        err_u = float(np.mean(np.abs(u_seq.u - u_old)))
        err_m = float(np.mean(np.abs(dens.m - m_old)))
        error = 0.5 * (err_u + err_m)
        trace.append(
            OuterIterate(
                it,
                error,
                err_u,
                err_m,
                err_u / max(float(np.mean(np.abs(u_seq.u))), 1e-300),
                err_m / max(float(np.mean(np.abs(dens.m))), 1e-300),
                time.perf_counter() - t0,
            )
        )
        last_paths = (last_paths + [raw])[-2:]
        log.info("outer %d: error %.3e (u %.3e, m %.3e)", it, error, err_u, err_m)
        if callback is not None:
            callback(trace[-1], raw)
        if not np.isfinite(error):
            status, message = BLOW_UP, f"outer error not finite at iteration {it}"
            break
        u_old, m_old = u_seq.u, dens.m
        if error <= config.outer_tol:
            status = CONVERGED
            break
        path = damping_control(it, raw, path, config.theta)
    else:
        message = f"no convergence within {config.max_outer} outer iterations"

    # reported once per solve rather than once per outer iteration
    if diag is not None:
        if diag.negativity_breaches:
            log.warning(
                "density undershoot at %d steps (min %.3g)", diag.negativity_breaches, diag.min_density
            )
        if diag.cfl_flag:
            log.warning("explicit density step has CFL number %.3f > 1", diag.cfl)

    return EquilibriumResult(
        config=config,
        status=status,
        u=u_seq,
        m=dens,
        path=raw,
        diagnostics=diag,
        trace=trace,
        message=message,
        elapsed=time.perf_counter() - t_start,
        last_paths=last_paths,
        failed_step=failed,
    )


def fixed_point_residual(result: EquilibriumResult) -> tuple[float, float]:
    """Mean absolute change of (u, m) after one more backward/forward pass."""
    cfg = result.config
    u_seq = HJBSolver(cfg).solve(effective_drift(result.path, cfg.params))
    dens, _, _ = FPSolver(cfg).solve(u_seq.u, mu_guess=result.path.mu)
    return (
        float(np.mean(np.abs(u_seq.u - result.u.u))),
        float(np.mean(np.abs(dens.m - result.m.m))),
    )


def control_sequence(result: EquilibriumResult) -> np.ndarray:
    """nu* for every slice of a solved run, shape ``(n_t+1, n_q+1, n_x+1)``."""
    cfg = result.config
    return np.stack(
        [optimal_control(s, cfg.grid, cfg.params.kappa, cfg.dx_floor) for s in result.u.u]
    )


__all__ = [
    "CONVERGED",
    "MAX_OUTER",
    "BLOW_UP",
    "INNER_FAILURE",
    "DriftPath",
    "EquilibriumResult",
    "OuterIterate",
    "boundary_flux_contribution",
    "boundary_flux_path",
    "contagion_split",
    "control_sequence",
    "damping_control",
    "effective_drift",
    "fixed_point_residual",
    "picard_solve",
]
