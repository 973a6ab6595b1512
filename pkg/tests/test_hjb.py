import numpy as np
import pytest

from firesale_mfg import DESK_GRID, ClosedFormSolution, GridSpec, InnerNonConvergence, scenario
from firesale_mfg.hjb import (
    HJBSolver,
    floor_dx,
    hjb_inner_step,
    numerical_hamiltonian,
    optimal_control,
    solve_backward,
)
from firesale_mfg.model import acceptance_mask, boundary_values

TINY = GridSpec(n_t=40, n_q=15, n_x=20)


def closed_form_drift(cfg):
    cf = ClosedFormSolution(cfg.params, cfg.initial.mean[0])
    return cf, cf.alpha * np.asarray(cf.contagion(cfg.times[:-1]))


def test_floor_policy():
    d = np.array([0.0, 1e-10, -1e-10, 0.5, -0.5])
    np.testing.assert_array_equal(floor_dx(d, 1e-8), [1e-8, 1e-8, -1e-8, 0.5, -0.5])


@pytest.mark.parametrize("slope", [1.3, -0.8, 0.0])
def test_numerical_hamiltonian_on_affine_field(slope):
    Q, X = DESK_GRID.mesh()
    H = numerical_hamiltonian(X + slope * Q, DESK_GRID, kappa=20.0)
    np.testing.assert_allclose(H, slope**2 / 80.0, rtol=1e-12, atol=1e-15)


def test_control_on_flat_field_is_finite():
    nu = optimal_control(np.full(DESK_GRID.shape, 3.0), DESK_GRID, 20.0)
    assert np.all(np.isfinite(nu))


def test_terminal_slice_exact():
    cfg = scenario(1, TINY).with_params(gamma=0.3)
    seq = HJBSolver(cfg).solve(np.zeros(TINY.n_t))
    Q, X = TINY.mesh()
    np.testing.assert_array_equal(seq.u[-1], X - 0.3 * Q**2)
    assert np.all(np.isfinite(seq.u))


def test_regulated_slices_pinned_outside_region():
    cfg = scenario(2, TINY)
    seq = HJBSolver(cfg).solve(np.full(TINY.n_t, -0.05))
    outside = ~acceptance_mask(TINY, cfg.params)
    for k in range(TINY.n_t):
        b = boundary_values(cfg.times[k], TINY, cfg.params)
        np.testing.assert_allclose(seq.u[k][outside], b[outside], rtol=1e-12)


def test_constant_is_a_fixed_point():
    cfg = scenario(1, TINY, regulated=False).with_params(mu_ex=0.0)
    u = np.full(TINY.shape, 2.5)
    np.testing.assert_allclose(hjb_inner_step(u, 0.0, 0.5, cfg), 2.5, atol=1e-12)


def test_equity_is_steady_without_drift():
    cfg = scenario(1, TINY, regulated=False).with_params(mu_ex=0.0, alpha=0.0)
    seq = solve_backward(np.zeros(TINY.n_t), cfg)
    _, X = TINY.mesh()
    assert np.abs(seq.u - X).max() <= cfg.inner_tol


def test_single_step_against_closed_form():
    cfg = scenario(1, DESK_GRID, regulated=False)
    cf, drift = closed_form_drift(cfg)
    k = 100
    u_next = cf.value_on_grid(cfg.times[k + 1 : k + 2], DESK_GRID)[0]
    u_ref = cf.value_on_grid(cfg.times[k : k + 1], DESK_GRID)[0]
    got = hjb_inner_step(u_next, drift[k], cfg.times[k], cfg)
    # affine in (q, x) for gamma = 0, so only the time step contributes
    assert np.abs(got - u_ref).max() <= cfg.dt**2


def test_backward_sweep_against_closed_form():
    cfg = scenario(1, DESK_GRID, regulated=False)
    cf, drift = closed_form_drift(cfg)
    seq = HJBSolver(cfg).solve(drift)
    ref = cf.value_on_grid(cfg.times, DESK_GRID)
    assert np.abs(seq.u - ref).max() / np.abs(ref).max() <= 1e-4
    nu = optimal_control(seq.u[0], DESK_GRID, cfg.params.kappa)
    np.testing.assert_allclose(nu, cf.h1(0.0) / (2 * cfg.params.kappa), rtol=1e-3)


@pytest.mark.parametrize("regulated", [False, True])
def test_implicit_and_jacobi_share_fixed_point(regulated):
    # jacobi is only stable for small dt * sigma_S^2 q^2 / dx^2, hence the fine time grid
    g = GridSpec(q_min=-1.0, q_max=3.0, x_min=0.0, x_max=40.0, n_t=400, n_q=8, n_x=10)
    cfg = scenario(2, g, regulated=regulated, inner_tol=1e-12)
    drift = np.full(g.n_t, -0.03)
    a = HJBSolver(cfg).solve(drift).u
    b = HJBSolver(cfg.replace(hjb_scheme="jacobi")).solve(drift).u
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_drift_shape_checked():
    with pytest.raises(ValueError):
        HJBSolver(scenario(1, TINY)).solve(np.zeros(TINY.n_t + 1))


def test_inner_cap_raises_with_step():
    cfg = scenario(2, TINY, max_inner=1, inner_tol=1e-30)
    with pytest.raises(InnerNonConvergence) as exc:
        HJBSolver(cfg).solve(np.zeros(TINY.n_t))
    assert exc.value.step == TINY.n_t - 1


def test_regulated_below_unregulated_before_maturity_window():
    # same drift: pinning can only remove value until k(t) grows, since near T the
    # pinned value k(t)(beta|q| + c) exceeds the equity of the pinned nodes
    cfg = scenario(1, DESK_GRID)
    _, drift = closed_form_drift(cfg)
    reg = HJBSolver(cfg).solve(drift).u
    unreg = HJBSolver(cfg.replace(regulated=False)).solve(drift).u
    mask = acceptance_mask(DESK_GRID, cfg.params)
    early = cfg.times <= cfg.params.T - 2 * cfg.params.epsilon
    assert np.max((reg - unreg)[early][:, mask]) <= 1e-6
    # inside the window the ordering does break next to the boundary
    assert np.max((reg - unreg)[~early][:, mask]) > 1e-3
