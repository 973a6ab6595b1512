import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from firesale_mfg import DESK_GRID, ConfigError, GridSpec, ModelParams, scenario, scenario_library
from firesale_mfg.model import (
    InitialDistribution,
    acceptance_mask,
    boundary_values,
    boundary_weight,
    dump_scenarios,
    in_acceptance_region,
    initial_density,
    load_scenarios,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(finite, finite)
def test_acceptance_region_is_symmetric_in_q(q, x):
    assert in_acceptance_region(q, x, 3.0, 5.0) == in_acceptance_region(-q, x, 3.0, 5.0)


def test_acceptance_region_is_open():
    assert not in_acceptance_region(2.0, 11.0, 3.0, 5.0)
    assert in_acceptance_region(2.0, 11.0 + 1e-12, 3.0, 5.0)
    assert not in_acceptance_region(0.0, 5.0, 3.0, 5.0)


def test_boundary_weight_shape():
    T, eps = 1.0, 0.05
    t = np.linspace(0, T, 2001)
    k = boundary_weight(t, T, eps)
    assert np.all(k > 0)
    assert np.all(np.diff(k) >= 0)
    assert k[t <= T / 2].max() < 5e-3
    assert boundary_weight(T - eps, T, eps) == pytest.approx(np.sqrt(4e-4) / (2 * eps), rel=1e-14)
    # the smoothing overshoots 1 slightly at T: (eps + sqrt(4e-4 + eps^2)) / (2 eps)
    assert boundary_weight(T, T, eps) == pytest.approx((eps + np.sqrt(4e-4 + eps**2)) / (2 * eps), rel=1e-14)
    assert 1.0 < boundary_weight(T, T, eps) < 1.05


def test_boundary_weight_reference_points():
    assert boundary_weight(1.0, 1.0, 0.1) == pytest.approx(5 * (0.1 + np.sqrt(0.0104)), rel=1e-14)
    assert boundary_weight(0.8, 1.0, 0.1) == pytest.approx(5 * (-0.1 + np.sqrt(0.0104)), rel=1e-12)
    assert boundary_weight(1.0, 1.0, 0.1) == pytest.approx(1.00990, abs=1e-5)


def test_boundary_values_use_abs_q():
    p = ModelParams()
    v = boundary_values(1.0, DESK_GRID, p)
    Q, _ = DESK_GRID.mesh()
    np.testing.assert_allclose(v, boundary_weight(1.0, 1.0, 0.05) * (3 * np.abs(Q) + 5))
    signed = boundary_values(1.0, DESK_GRID, p, abs_q=False)
    assert np.all(signed[Q < 0] < v[Q < 0])


def test_initial_density_normalised_and_truncated():
    g = DESK_GRID
    p = ModelParams()
    mask = acceptance_mask(g, p)
    m = initial_density(InitialDistribution((5.0, 60.0), (0.1, 15.0)), g, mask)
    assert m.sum() * g.dq * g.dx == pytest.approx(1.0, abs=1e-13)
    assert np.all(m[~mask] == 0)
    assert np.all(m >= 0)


def test_initial_density_outside_region_is_rejected():
    g = DESK_GRID
    mask = acceptance_mask(g, ModelParams())
    with pytest.raises(ConfigError):
        initial_density(InitialDistribution((5.0, 2.0), (0.01, 0.01)), g, mask)


def test_grid_nodes():
    g = GridSpec(q_min=-1, q_max=1, x_min=0, x_max=4, n_t=10, n_q=4, n_x=8)
    assert g.dq == 0.5 and g.dx == 0.5
    assert g.shape == (5, 9)
    np.testing.assert_allclose(g.times(2.0), np.linspace(0, 2, 11))


def test_default_grid_keeps_anchor_nodes():
    # sections are exported at q=7 and x=32; both grids must hold those nodes exactly
    for g in (DESK_GRID, scenario(1).grid):
        assert np.min(np.abs(g.q - 7)) < 1e-12
        assert np.min(np.abs(g.x - 32)) < 1e-12


@pytest.mark.parametrize(
    "kwargs",
    [dict(kappa=0), dict(epsilon=0), dict(epsilon=2.0), dict(gamma=-1), dict(sigma_Q=0),
     dict(alpha=None), dict(alpha=1.0, alpha_active=0.5, alpha_liq=0.5)],
)
def test_invalid_params(kwargs):
    with pytest.raises(ConfigError):
        ModelParams(**kwargs)


def test_config_validation():
    with pytest.raises(ConfigError):
        scenario(1, DESK_GRID, theta=0.0)
    with pytest.raises(ConfigError):
        scenario(7)
    with pytest.raises(ConfigError):
        scenario(1, DESK_GRID, hjb_scheme="newton")


def test_scenario_library_values():
    lib = scenario_library()
    assert [c.id for c in lib] == [1, 2, 3, 4]
    assert lib[0].params.mu_ex == 1.6 and lib[1].params.mu_ex == -1.6
    assert lib[2].initial.mean == (5.0, 70.0)
    assert lib[3].params.split_mode
    assert (lib[3].params.alpha_active, lib[3].params.alpha_liq) == (0.8, 0.2)
    for c in lib:
        p = c.params
        assert (p.sigma_Q, p.sigma_S, p.sigma_A, p.beta, p.c, p.kappa, p.gamma) == (1.4, 2.0, 0.1, 3.0, 5.0, 20.0, 0.0)
        assert c.initial.var == (0.1, 15.0)


def test_yaml_round_trip_and_hash():
    lib = scenario_library(DESK_GRID)
    text = dump_scenarios(lib)
    back = load_scenarios(io.StringIO(text))
    assert back == lib
    assert [c.config_hash() for c in back] == [c.config_hash() for c in lib]
    assert lib[0].config_hash() != lib[0].replace(regulated=False).config_hash()


def test_malformed_yaml():
    with pytest.raises(ConfigError):
        load_scenarios(io.StringIO("id: 1\nparams: {kappa: 1}\n"))
    with pytest.raises(ConfigError):
        load_scenarios(io.StringIO("- 1\n- 2\n"))
    with pytest.raises(ConfigError):
        load_scenarios(io.StringIO("a: [1,\n"))
