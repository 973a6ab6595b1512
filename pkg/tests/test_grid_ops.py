import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from firesale_mfg import GridSpec
from firesale_mfg.grid_ops import (
    KINDS,
    Stencils,
    diff,
    extend,
    flatten,
    integrate,
    moment_q,
    moment_x,
    neg_part,
    operator_matrix,
    pos_part,
    unflatten,
)

SMALL = GridSpec(q_min=-2.0, q_max=3.0, x_min=0.0, x_max=8.0, n_t=4, n_q=10, n_x=16)


def interior(a):
    return a[1:-1, 1:-1]


def test_ghost_layer_linear_extension():
    rng = np.random.default_rng(1)
    y = rng.normal(size=SMALL.shape)
    g = extend(y)
    np.testing.assert_allclose(g[0, 1:-1], 2 * y[0] - y[1])
    np.testing.assert_allclose(g[-1, 1:-1], 2 * y[-1] - y[-2])
    np.testing.assert_allclose(g[1:-1, 0], 2 * y[:, 0] - y[:, 1])
    np.testing.assert_allclose(g[1:-1, -1], 2 * y[:, -1] - y[:, -2])
    np.testing.assert_allclose(g[1:-1, 1:-1], y)


def test_affine_exactness():
    Q, X = SMALL.mesh()
    a, b = 1.7, -0.4
    s = Stencils.of(a * Q + b * X + 3.0, SMALL)
    # affine fields are reproduced by the linear ghost layer, so this holds everywhere
    np.testing.assert_allclose(s.D_q, a, atol=1e-12)
    np.testing.assert_allclose(s.D_qR, a, atol=1e-12)
    np.testing.assert_allclose(s.D_qL, a, atol=1e-12)
    np.testing.assert_allclose(s.D_x, b, atol=1e-12)
    np.testing.assert_allclose(s.Lap_q, 0, atol=1e-10)
    np.testing.assert_allclose(s.Lap_x, 0, atol=1e-10)
    np.testing.assert_allclose(s.Lap_qx, 0, atol=1e-10)


def test_mixed_stencil_on_product():
    Q, X = SMALL.mesh()
    np.testing.assert_allclose(interior(Stencils.of(Q * X, SMALL).Lap_qx), 1.0, atol=1e-12)


def test_quadratic_in_q():
    Q, _ = SMALL.mesh()
    s = Stencils.of(Q**2, SMALL)
    np.testing.assert_allclose(interior(s.Lap_q), 2.0, atol=1e-10)
    np.testing.assert_allclose(interior(s.D_qR - s.D_qL), 2 * SMALL.dq, atol=1e-12)


def test_boundary_second_differences_vanish():
    Q, X = SMALL.mesh()
    s = Stencils.of(np.sin(Q) * np.cos(X), SMALL)
    np.testing.assert_allclose(s.Lap_q[[0, -1], :], 0, atol=1e-12)
    np.testing.assert_allclose(s.Lap_x[:, [0, -1]], 0, atol=1e-12)


def _field(Q, X):
    return np.sin(0.9 * Q) * np.cos(0.3 * X) + np.exp(0.05 * Q * X)


def _exact(Q, X):
    e = np.exp(0.05 * Q * X)
    s, c = np.sin(0.9 * Q), np.cos(0.3 * X)
    return {
        "D_q": 0.9 * np.cos(0.9 * Q) * c + 0.05 * X * e,
        "D_qR": 0.9 * np.cos(0.9 * Q) * c + 0.05 * X * e,
        "D_qL": 0.9 * np.cos(0.9 * Q) * c + 0.05 * X * e,
        "D_x": -0.3 * s * np.sin(0.3 * X) + 0.05 * Q * e,
        "Lap_q": -0.81 * s * c + 0.0025 * X**2 * e,
        "Lap_x": -0.09 * s * c + 0.0025 * Q**2 * e,
        "Lap_qx": -0.27 * np.cos(0.9 * Q) * np.sin(0.3 * X) + (0.05 + 0.0025 * Q * X) * e,
    }


def observed_orders(kind, levels=(8, 16, 32, 64)):
    # errors at interior nodes shared by every level (the coarse interior)
    errs = []
    for n in levels:
        g = GridSpec(q_min=-2.0, q_max=2.0, x_min=0.0, x_max=4.0, n_t=2, n_q=n, n_x=n)
        Q, X = g.mesh()
        step = n // levels[0]
        sl = slice(step, n - step + 1, step)
        approx = Stencils.of(_field(Q, X), g)[kind][sl, sl]
        errs.append(np.abs(approx - _exact(Q, X)[kind][sl, sl]).max())
    errs = np.array(errs)
    return np.log2(errs[:-1] / errs[1:])


@pytest.mark.parametrize("kind", ["D_q", "D_x", "Lap_q", "Lap_x", "Lap_qx"])
def test_convergence_order_central(kind):
    assert observed_orders(kind).min() >= 1.9


@pytest.mark.parametrize("kind", ["D_qR", "D_qL"])
def test_convergence_order_one_sided(kind):
    assert observed_orders(kind).min() >= 0.9


@pytest.mark.parametrize("kind", ["D_q", "D_x", "Lap_q", "Lap_x"])
def test_sparse_operators_match_stencils(kind):
    rng = np.random.default_rng(2)
    y = rng.normal(size=SMALL.shape)
    got = unflatten(operator_matrix(kind, SMALL) @ flatten(y), SMALL)
    np.testing.assert_allclose(got, Stencils.of(y, SMALL)[kind], atol=1e-10)


def test_flatten_round_trip():
    y = np.arange(np.prod(SMALL.shape), dtype=float).reshape(SMALL.shape)
    np.testing.assert_array_equal(unflatten(flatten(y), SMALL), y)
    # q index runs fastest
    assert flatten(y)[1] == y[1, 0]


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, SMALL.shape, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, SMALL.shape, elements=st.floats(-1e3, 1e3)),
    st.floats(-10, 10),
)
def test_operators_are_linear_and_finite(a, b, lam):
    sa, sb, sab = Stencils.of(a, SMALL), Stencils.of(b, SMALL), Stencils.of(a + lam * b, SMALL)
    for kind in KINDS:
        assert np.all(np.isfinite(sab[kind]))
        np.testing.assert_allclose(sab[kind], sa[kind] + lam * sb[kind], rtol=1e-9, atol=1e-6)


@given(arrays(np.float64, 7, elements=st.floats(-1e6, 1e6)))
def test_positive_negative_split(a):
    np.testing.assert_array_equal(pos_part(a) + neg_part(a), a)
    assert np.all(pos_part(a) >= 0) and np.all(neg_part(a) <= 0)


def test_single_node_access():
    Q, X = SMALL.mesh()
    assert diff(Q * X, (3, 4), "Lap_qx", SMALL) == pytest.approx(1.0)
    with pytest.raises(IndexError):
        diff(Q, (SMALL.n_q + 1, 0), "D_q", SMALL)
    with pytest.raises(KeyError):
        Stencils.of(Q, SMALL)["D_y"]


def test_uniform_density_integrates_to_one():
    g = SMALL
    m = np.full(g.shape, 1 / ((g.q_max - g.q_min) * (g.x_max - g.x_min)))
    # node sum over-counts the boundary half cells: (n+1)/n per axis
    expected = (g.n_q + 1) / g.n_q * (g.n_x + 1) / g.n_x
    assert integrate(m, g) == pytest.approx(expected)


def test_point_mass_moments():
    g = SMALL
    m = np.zeros(g.shape)
    m[4, 7] = 1 / (g.dq * g.dx)
    assert integrate(m, g) == pytest.approx(1.0)
    assert moment_q(m, g) == pytest.approx(g.q[4])
    assert moment_x(m, g) == pytest.approx(g.x[7])
