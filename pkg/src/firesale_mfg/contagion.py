"""Contagion drift path shared by the backward and forward solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import ModelParams


@dataclass
class DriftPath:
    """Per-step contagion quantities, ``n_t`` entries each.

    ``liquidation`` is defined as the residual ``mu - active``.
    """

    mu: np.ndarray
    active: np.ndarray
    liquidation: np.ndarray

    @classmethod
    def zeros(cls, n_t: int) -> DriftPath:
        return cls(np.zeros(n_t), np.zeros(n_t), np.zeros(n_t))

    @classmethod
    def from_mu_active(cls, mu, active) -> DriftPath:
        mu = np.asarray(mu, dtype=float)
        active = np.asarray(active, dtype=float)
        return cls(mu, active, mu - active)

    def __len__(self):
        return len(self.mu)

    def copy(self) -> DriftPath:
        return DriftPath(self.mu.copy(), self.active.copy(), self.liquidation.copy())


def effective_drift(path: DriftPath, params: ModelParams, k=None):
    """Contagion contribution added to ``mu_ex`` in the asset drift.

    ``alpha * mu`` in single mode, ``alpha_active * active + alpha_liq * liquidation``
    in split mode. ``k=None`` returns the whole path.
    """
    sl = slice(None) if k is None else k
    if params.alpha is not None:
        if params.alpha_active is not None or params.alpha_liq is not None:
            raise ConfigError("give either alpha or (alpha_active, alpha_liq), not both")
        return params.alpha * path.mu[sl]
    if params.alpha_active is None or params.alpha_liq is None:
        raise ConfigError("split mode needs both alpha_active and alpha_liq")
    return params.alpha_active * path.active[sl] + params.alpha_liq * path.liquidation[sl]


def contribution(params: ModelParams, mu: float, active: float) -> float:
    """Single-step version of :func:`effective_drift` from ``mu`` and ``active``."""
    if params.alpha is not None:
        return params.alpha * mu
    return params.alpha_active * active + params.alpha_liq * (mu - active)


def damping_control(iteration, raw, previous, theta: float):
    """Relaxed update ``theta*raw + (1-theta)*previous`` (paths or plain arrays/scalars).

    ``iteration`` is accepted for logging symmetry; the blend does not depend on it.
    """
    if not 0 < theta <= 1:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")
    if isinstance(raw, DriftPath):
        if theta == 1.0:
            return raw.copy()
        mu = theta * raw.mu + (1 - theta) * previous.mu
        active = theta * raw.active + (1 - theta) * previous.active
        return DriftPath(mu, active, mu - active)
    return theta * np.asarray(raw) + (1 - theta) * np.asarray(previous)
