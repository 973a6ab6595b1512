import json

import numpy as np
import pytest

from firesale_mfg import DESK_GRID, ClosedFormSolution, ConfigError, DriftPath, GridSpec, scenario
from firesale_mfg.contagion import contribution, damping_control, effective_drift
from firesale_mfg.coupler import (
    BLOW_UP,
    CONVERGED,
    INNER_FAILURE,
    MAX_OUTER,
    boundary_flux_contribution,
    boundary_flux_path,
    contagion_split,
    control_sequence,
    fixed_point_residual,
    picard_solve,
)

from conftest import solved

SMALL = GridSpec(n_t=100, n_q=20, n_x=40)


def test_damping_blend():
    a, b = DriftPath.from_mu_active([1.0, 2.0], [0.5, 0.5]), DriftPath.from_mu_active([3.0, 4.0], [1.5, 0.5])
    out = damping_control(3, a, b, 0.25)
    np.testing.assert_allclose(out.mu, [2.5, 3.5])
    np.testing.assert_allclose(out.liquidation, out.mu - out.active)
    assert damping_control(1, 2.0, 4.0, 0.5) == 3.0
    assert damping_control(1, 2.0, 0.0, 0.5) == 1.0
    same = damping_control(2, a, a, 0.5)
    np.testing.assert_array_equal(same.mu, a.mu)
    full = damping_control(1, a, b, 1.0)
    assert full is not a and np.array_equal(full.mu, a.mu)
    with pytest.raises(ConfigError):
        damping_control(1, a, b, 0.0)


def test_effective_drift_modes():
    path = DriftPath.from_mu_active([1.0, -2.0], [0.25, 0.5])
    single = scenario(2).params
    split = scenario(4).params
    np.testing.assert_allclose(effective_drift(path, single), [1.0, -2.0])
    np.testing.assert_allclose(effective_drift(path, split), [0.8 * 0.25 + 0.2 * 0.75, 0.8 * 0.5 + 0.2 * -2.5])
    assert contribution(split, 1.0, 0.25) == pytest.approx(effective_drift(path, split, 0))


def test_unregulated_equilibrium_matches_closed_form(desk_solve):
    r = desk_solve(1, regulated=False)
    assert r.status == CONVERGED
    cf = ClosedFormSolution(r.config.params, r.config.initial.mean[0])
    ref = cf.value_on_grid(r.config.times, DESK_GRID)
    assert np.abs(r.u.u - ref).max() / np.abs(ref).max() <= 0.02
    mu_ref = cf.contagion(r.config.times[:-1])
    assert np.abs(r.path.mu - mu_ref).max() <= 0.05 * np.abs(mu_ref).max()
    nu = control_sequence(r)
    assert nu.shape == (DESK_GRID.n_t + 1,) + DESK_GRID.shape


def test_converged_pair_is_a_fixed_point(desk_solve):
    r = desk_solve(2)
    assert r.converged
    du, dm = fixed_point_residual(r)
    assert du <= 2 * r.config.outer_tol and dm <= 2 * r.config.outer_tol


def test_trace_is_recorded(desk_solve):
    r = desk_solve(2)
    errs = [it.error for it in r.trace]
    assert errs[-1] <= r.config.outer_tol < errs[0]
    assert r.iterations == len(errs) >= 2


def test_contagion_split_reproduces_solver_path(desk_solve):
    r = desk_solve(2)
    p = contagion_split(r.m.m, control_sequence(r), DESK_GRID, r.config.dt)
    np.testing.assert_allclose(p.active, r.path.active, atol=1e-12)
    # the solver's mu is the moment difference of the returned slices up to the inner tolerance
    np.testing.assert_allclose(p.mu, r.path.mu, atol=r.config.inner_tol / r.config.dt)


def test_boundary_flux_tracks_liquidation(desk_solve):
    r = desk_solve(2)
    flux = boundary_flux_path(r.m.m, DESK_GRID, r.config.params)
    liq = r.path.liquidation
    assert np.corrcoef(flux, liq)[0, 1] > 0.99
    k = np.argmin(liq)
    assert flux[k] == pytest.approx(liq[k], rel=0.05)
    assert boundary_flux_contribution(np.zeros(DESK_GRID.shape), DESK_GRID, r.config.params) == 0.0


def test_split_mode_with_equal_weights_matches_single_mode():
    single = picard_solve(scenario(2, SMALL))
    split = picard_solve(scenario(2, SMALL).with_params(alpha=None, alpha_active=1.0, alpha_liq=1.0))
    assert single.converged and split.converged
    assert np.abs(single.path.mu - split.path.mu).max() <= 2 * single.config.outer_tol


def test_iteration_cap_returns_status():
    r = picard_solve(scenario(2, SMALL, max_outer=1))
    assert r.status == MAX_OUTER and not r.converged
    rep = r.report()
    assert "last_drift_paths" in rep and len(rep["last_drift_paths"]) == 1
    json.dumps(rep)


def test_inner_failure_returns_status():
    r = picard_solve(scenario(2, SMALL, max_inner=1))
    assert r.status == INNER_FAILURE
    assert r.failed_step is not None and r.message
    assert r.report()["status"] == INNER_FAILURE


def test_non_finite_drift_returns_blow_up():
    path0 = DriftPath.zeros(SMALL.n_t)
    path0.mu[50] = np.nan
    r = picard_solve(scenario(2, SMALL), path0=path0)
    assert r.status == BLOW_UP
    json.dumps(r.report(), default=str)


def test_callback_sees_every_outer_iteration():
    seen = []
    r = picard_solve(scenario(2, SMALL), callback=lambda it, path: seen.append((it.iteration, len(path))))
    assert [s[0] for s in seen] == list(range(1, r.iterations + 1))
    assert all(s[1] == SMALL.n_t for s in seen)


def test_damping_reaches_same_equilibrium():
    a = picard_solve(scenario(2, SMALL))
    b = picard_solve(scenario(2, SMALL, theta=0.6))
    assert a.converged and b.converged
    assert np.abs(a.path.mu - b.path.mu).max() <= 1e-4
