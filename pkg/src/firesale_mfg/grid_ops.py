"""Finite-difference operators on the (q, x) lattice.

Every array here has shape ``(n_q+1, n_x+1)``: axis 0 is inventory q, axis 1
is equity x. Boundary nodes are handled through one ghost layer obtained by
linear extrapolation, ``y[-1] = 2*y[0] - y[1]`` (and likewise at the far end
and along x). With that extension the central difference at a boundary node
equals the one-sided difference and the second differences vanish there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import GridSpec

KINDS = ("D_q", "D_qR", "D_qL", "D_x", "Lap_q", "Lap_x", "Lap_qx")


def pos_part(a):
    return np.maximum(a, 0.0)


def neg_part(a):
    """Negative part with sign kept: ``min(a, 0)``, so ``a == pos_part(a) + neg_part(a)``."""
    return np.minimum(a, 0.0)


def extend(y: np.ndarray) -> np.ndarray:
    """Add one linearly extrapolated ghost layer on every side (corners included).

    Only the last two axes are padded, so a stack of slices can be passed.
    """
    y = np.asarray(y, dtype=float)
    width = ((0, 0),) * (y.ndim - 2) + ((1, 1), (1, 1))
    return np.pad(y, width, mode="reflect", reflect_type="odd")


@dataclass(frozen=True)
class Stencils:
    """All difference quotients of one slice, evaluated at every lattice node."""

    D_q: np.ndarray
    D_qR: np.ndarray
    D_qL: np.ndarray
    D_x: np.ndarray
    Lap_q: np.ndarray
    Lap_x: np.ndarray
    Lap_qx: np.ndarray

    @classmethod
    def of(cls, y: np.ndarray, grid: GridSpec) -> Stencils:
        g = extend(y)
        dq, dx = grid.dq, grid.dx
        c = g[..., 1:-1, 1:-1]
        up, dn = g[..., 2:, 1:-1], g[..., :-2, 1:-1]
        rt, lt = g[..., 1:-1, 2:], g[..., 1:-1, :-2]
        # nested central form D_x(D_q y): denominator 4*dq*dx
        mixed = (g[..., 2:, 2:] - g[..., :-2, 2:] - g[..., 2:, :-2] + g[..., :-2, :-2]) / (4 * dq * dx)
        return cls(
            D_q=(up - dn) / (2 * dq),
            D_qR=(up - c) / dq,
            D_qL=(c - dn) / dq,
            D_x=(rt - lt) / (2 * dx),
            Lap_q=(up - 2 * c + dn) / dq**2,
            Lap_x=(rt - 2 * c + lt) / dx**2,
            Lap_qx=mixed,
        )

    def __getitem__(self, kind: str) -> np.ndarray:
        if kind not in KINDS:
            raise KeyError(f"unknown operator {kind!r}; expected one of {KINDS}")
        return getattr(self, kind)


def diff(y: np.ndarray, node: tuple[int, int], kind: str, grid: GridSpec) -> float:
    """Single-node access to one difference operator."""
    i, j = node
    if not (0 <= i <= grid.n_q and 0 <= j <= grid.n_x):
        raise IndexError(f"node {node} lies outside the lattice {grid.shape}")
    return float(Stencils.of(y, grid)[kind][i, j])


def integrate(m: np.ndarray, grid: GridSpec) -> float:
    return float(m.sum() * grid.dq * grid.dx)


def moment_q(m: np.ndarray, grid: GridSpec) -> float:
    return float((grid.q[:, None] * m).sum() * grid.dq * grid.dx)


def moment_x(m: np.ndarray, grid: GridSpec) -> float:
    return float((m * grid.x[None, :]).sum() * grid.dq * grid.dx)


# Sparse operators, acting on slices flattened in Fortran order (q index fastest),
# which keeps the bandwidth of the assembled 2-D systems at n_q + 1.


def _central_1d(n: int, h: float) -> sp.csr_matrix:
    A = sp.diags([-np.ones(n), np.ones(n)], [-1, 1], shape=(n + 1, n + 1), format="lil")
    A[0, :2] = [-2.0, 2.0]
    A[n, n - 1 :] = [-2.0, 2.0]
    return (A / (2 * h)).tocsr()


def _second_1d(n: int, h: float) -> sp.csr_matrix:
    A = sp.diags(
        [np.ones(n), -2 * np.ones(n + 1), np.ones(n)], [-1, 0, 1], shape=(n + 1, n + 1), format="lil"
    )
    A[0, :] = 0.0
    A[n, :] = 0.0
    return (A / h**2).tocsr()


def flatten(y: np.ndarray) -> np.ndarray:
    return np.asarray(y).ravel(order="F")


def unflatten(v: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.asarray(v).reshape(grid.shape, order="F")


def operator_matrix(kind: str, grid: GridSpec) -> sp.csr_matrix:
    """Sparse matrix of ``D_q``, ``D_x``, ``Lap_q`` or ``Lap_x`` including the ghost extension."""
    Iq, Ix = sp.identity(grid.n_q + 1), sp.identity(grid.n_x + 1)
    if kind == "D_q":
        return sp.kron(Ix, _central_1d(grid.n_q, grid.dq), format="csr")
    if kind == "Lap_q":
        return sp.kron(Ix, _second_1d(grid.n_q, grid.dq), format="csr")
    if kind == "D_x":
        return sp.kron(_central_1d(grid.n_x, grid.dx), Iq, format="csr")
    if kind == "Lap_x":
        return sp.kron(_second_1d(grid.n_x, grid.dx), Iq, format="csr")
    raise KeyError(f"no sparse form for {kind!r}")
