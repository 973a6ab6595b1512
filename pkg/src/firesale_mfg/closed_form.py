"""Explicit equilibrium of the game without capital constraints.

The value function is ``u(t, q, x) = x + h0(t) + h1(t) q - h2(t) q^2 / 2`` and the
optimal trading rate ``(h1 - h2 q) / (2 kappa)``. The coefficients solve the
linear two-point problem

    h1' = -(alpha/2kappa)(h1 - h2 E) - mu_ex + h1 h2/(2kappa),   h1(T) = 0
    h0' = -h1^2/(4kappa),                                          h0(T) = 0
    E'  = (h1 - h2 E)/(2kappa),                                    E(0) = E0

with ``E`` the population-average inventory. For ``alpha > 0`` everything but
``h0`` is evaluated in closed form; ``h0`` comes from adaptive quadrature, and
the long exponential-integral expression for ``h0`` is kept as a cross-check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import ConfigError
from .model import ModelParams

EULER_GAMMA = 0.57721566490153286061


def _ei_scalar(z: float) -> float:
    if not z > 0:
        raise ValueError(f"Ei is only provided for z > 0, got {z}")
    if z <= 40.0:
        # gamma + ln z + sum z^k / (k k!); all terms positive, no cancellation
        total, term, k = 0.0, 1.0, 0
        while True:
            k += 1
            term *= z / k
            inc = term / k
            total += inc
            if inc < 1e-17 * total:
                break
        return EULER_GAMMA + math.log(z) + total
    # asymptotic series e^z/z * sum k!/z^k, truncated at its smallest term
    total, term, k = 1.0, 1.0, 0
    while True:
        k += 1
        nxt = term * k / z
        if nxt >= term or nxt < 1e-18:
            break
        term = nxt
        total += term
    return math.exp(z) / z * total


def exp_integral_ei(z):
    """Principal-value exponential integral Ei(z) for z > 0 (scalar or array)."""
    if np.ndim(z) == 0:
        return _ei_scalar(float(z))
    z = np.asarray(z, dtype=float)
    return np.array([_ei_scalar(v) for v in z.ravel()]).reshape(z.shape)


class ClosedFormSolution:
    """Coefficient functions of the unregulated equilibrium.

    ``E0`` is the initial mean inventory. In split-contagion mode the
    unregulated drift has no liquidation part, so ``alpha_active`` acts as the
    contagion weight.
    """

    def __init__(self, params: ModelParams, E0: float):
        self.params = params
        self.E0 = float(E0)
        self.alpha = params.alpha_active if params.split_mode else params.alpha
        self._ode = None if self.alpha > 0 else self._integrate_system()

    # h2 -------------------------------------------------------------------

    def h2(self, t):
        p = self.params
        t = np.asarray(t, dtype=float)
        if p.gamma == 0:
            return np.zeros_like(t)[()]
        return (2 * p.kappa / (p.T - t + p.kappa / p.gamma))[()]

    # E and E' -------------------------------------------------------------

    def _denominator(self):
        p, al = self.params, self.alpha
        return (al**2 - 2 * p.gamma * al) * np.exp(-al * p.T / (2 * p.kappa)) + 2 * p.gamma * al

    def mean_inventory(self, t):
        """Average inventory E(t)."""
        if self._ode is not None:
            return self._ode(t)[1]
        p, al, E0 = self.params, self.alpha, self.E0
        t = np.asarray(t, dtype=float)
        a = al / (2 * p.kappa)
        g, mu = p.gamma, p.mu_ex
        num = E0 * (al**2 * np.exp(-a * p.T) + 2 * g * al * (np.exp(-a * t) - np.exp(-a * p.T))) - (
            2 * p.kappa * mu + 2 * mu * g * p.T
        ) * (np.exp(-a * t) - 1)
        return (num / self._denominator() - mu / al * t)[()]

    def contagion(self, t):
        """Equilibrium contagion term, i.e. E'(t) = (h1 - h2 E)/(2 kappa)."""
        if self._ode is not None:
            h1, E = self._ode(t)
            return (h1 - self.h2(t) * E) / (2 * self.params.kappa)
        p, al, E0 = self.params, self.alpha, self.E0
        t = np.asarray(t, dtype=float)
        a = al / (2 * p.kappa)
        g, mu, k = p.gamma, p.mu_ex, p.kappa
        lead = mu * al + al * mu * g * p.T / k - E0 * al**2 * g / k
        return (lead * np.exp(-a * t) / self._denominator() - mu / al)[()]

    # h1, h0 ---------------------------------------------------------------

    def h1(self, t):
        if self._ode is not None:
            return self._ode(t)[0]
        return 2 * self.params.kappa * self.contagion(t) + self.h2(t) * self.mean_inventory(t)

    def _h0_rate(self, s):
        return self.h1(s) ** 2 / (4 * self.params.kappa)

    def h0(self, t):
        """h0(t) = integral over [t, T] of h1^2/(4 kappa), by adaptive quadrature."""
        T = self.params.T
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        order = np.argsort(-ts)
        out = np.empty_like(ts)
        acc, prev = 0.0, T
        for idx in order:
            cur = ts[idx]
            if cur < prev:
                acc += quad(self._h0_rate, cur, prev, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                prev = cur
            out[idx] = acc
        return out.reshape(np.shape(t))[()]

    def h0_exponential_integral(self, t, corrected: bool = True):
        """Exponential-integral expression for h0 (requires gamma > 0, alpha > 0).

        The ``E0 gamma mu_ex kappa`` terms of the second block carry coefficient 4.
        ``corrected=False`` doubles them to 8; that variant no longer integrates
        h1^2/(4 kappa) and is kept only for comparison.
        """
        p = self.params
        if not (p.gamma > 0 and self.alpha > 0):
            raise ConfigError("the exponential-integral form of h0 needs gamma > 0 and alpha > 0")
        raw = self._h0_antiderivative(np.asarray(t, dtype=float), corrected)
        return (raw - self._h0_antiderivative(np.asarray(p.T), corrected))[()]

    def _h0_antiderivative(self, t, corrected):
        p, al, E0 = self.params, self.alpha, self.E0
        k, g, mu, T = p.kappa, p.gamma, p.mu_ex, p.T
        a = al / (2 * k)
        D = self._denominator()
        exp, log, Ei = np.exp, np.log, exp_integral_ei
        s = g * (T - t) + k
        z1 = al * s / (2 * g * k)
        z2 = al * s / (g * k)
        e_half = exp(-al * (g * T + k) / (2 * g * k))
        e_full = exp(-al * (g * T + k) / (g * k))
        log_s = log(T - t + k / g)
        c8 = 8.0 if not corrected else 4.0

        omega = (
            (
                mu**2 * al * k**2
                + al * mu**2 * g**2 * T**2
                + E0**2 * al**3 * g**2
                + 2 * al * k * mu**2 * g * T
                - 2 * E0 * al**2 * mu * k * g
                - 2 * al**2 * mu * g**2 * T * E0
            )
            * exp(-al / k * t)
            / D**2
            - 4 * (mu**2 * k**2 / al + mu**2 * k * g / al * T - E0 * k * g * mu) * exp(-a * t) / D
            - mu**2 * k / al**2 * t
        )

        lin = mu * al * k + al * mu * g * T - E0 * al**2 * g
        gamma_ = -(
            ((4 * g * al * E0 - 2 * al**2 * E0) * exp(-a * T) - (4 * k * mu + 4 * mu * g * T)) * lin / D**2
            + (c8 * E0 * g * mu * k - (4 * k**2 * mu**2 / al + 4 * mu**2 * g * k / al * T)) / D
        ) * e_half * Ei(z1)
        gamma_ = gamma_ - (4 * k * mu + 4 * mu * g * T - 4 * g * al * E0) * lin / D**2 * e_full * Ei(z2)
        gamma_ = gamma_ - (
            (2 * E0 * al * mu * k - c8 * E0 * g * mu * k) * exp(-a * T)
            + 4 * k**2 * mu**2 / al
            + 4 * mu**2 * g * k / al * T
        ) / D * log_s
        gamma_ = gamma_ + (2 * mu**2 * k + 2 * mu**2 * g * T - 2 * E0 * al * mu * g) / D * exp(
            -al * (k + g * (T + t)) / (2 * g * k)
        ) / (al * g) * (
            2 * g * k * exp(al * (k + g * T) / (2 * g * k)) - al * exp(al * t / (2 * k)) * (g * T + k) * Ei(z1)
        )
        gamma_ = gamma_ + 2 * k * mu**2 / al**2 * ((g * T + k) / g * log(s) + t)

        P0 = E0 * al**2 - 2 * E0 * g * al
        P1 = 2 * k * mu + 2 * mu * g * T
        R = 4 * E0 * g * al - 4 * k * mu - 4 * mu * g * T
        pi = -((2 * E0 * g * al - 2 * k * mu - 2 * mu * g * T) ** 2) / D**2 * e_full * (
            g * k * exp(al * s / (g * k)) - al * s * Ei(z2)
        ) / s
        pi = pi - (R * P0 * exp(-a * T) + R * P1) / D**2 * e_half * (
            2 * g * k * exp(al * s / (2 * g * k)) - al * s * Ei(z1)
        ) / (2 * s)
        pi = pi - (P0**2 * exp(-al / k * T) + P1**2 + 2 * P0 * exp(-a * T) * P1) / D**2 * k / (T - t + k / g)
        pi = pi + (4 * E0 * g * mu - (4 * k * mu**2 / al + 4 * mu**2 * g / al * T)) / D * k / (
            2 * g * k * s
        ) * e_half * (-s * (al * k - 2 * g * k + g * al * T) * Ei(z1) + 2 * g * k * (k + g * T) * exp(z1))
        pi = pi + (
            2 * E0 * al * mu * exp(-a * T) - 4 * E0 * g * mu * exp(-a * T) + (4 * k * mu**2 / al + 4 * mu**2 * g / al * T)
        ) / D * k * (s * log_s + g * T + k) / s
        pi = pi - mu**2 * k / al**2 * ((g * T + k) ** 2 / (g**2 * (T - t + k / g)) + 2 * (g * T + k) * log_s / g + t)
        return omega + gamma_ + pi

    # value function and control -------------------------------------------

    def value_and_strategy(self, t, q, x):
        """``(u, nu)`` at (t, q, x); arrays broadcast."""
        h0, h1, h2 = self.h0(t), self.h1(t), self.h2(t)
        q = np.asarray(q, dtype=float)
        u = np.asarray(x, dtype=float) + h0 + h1 * q - 0.5 * h2 * q**2
        nu = (h1 - h2 * q) / (2 * self.params.kappa)
        return u, nu

    def value_on_grid(self, times, grid) -> np.ndarray:
        """u at every (t_k, q_i, x_j), shape ``(len(times), n_q+1, n_x+1)``."""
        times = np.asarray(times, dtype=float)
        h0, h1, h2 = self.h0(times), self.h1(times), self.h2(times)
        Q, X = grid.mesh()
        return (
            X[None]
            + np.asarray(h0)[:, None, None]
            + np.asarray(h1)[:, None, None] * Q[None]
            - 0.5 * np.asarray(h2)[:, None, None] * Q[None] ** 2
        )

    def table(self, times) -> dict[str, np.ndarray]:
        times = np.asarray(times, dtype=float)
        return {
            "t": times,
            "h0": np.asarray(self.h0(times)),
            "h1": np.asarray(self.h1(times)),
            "h2": np.asarray(self.h2(times)) * np.ones_like(times),
            "E": np.asarray(self.mean_inventory(times)),
            "mu_bar": np.asarray(self.contagion(times)),
        }

    # alpha = 0 fallback -------------------------------------------------------

    def _integrate_system(self):
        p, al = self.params, self.alpha

        def rhs(t, y):
            h1, E = y
            h2 = self.h2(t)
            d = h1 - h2 * E
            return [-al / (2 * p.kappa) * d - p.mu_ex + h1 * h2 / (2 * p.kappa), d / (2 * p.kappa)]

        def shoot(s):
            return solve_ivp(
                rhs, (0.0, p.T), [s, self.E0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True
            )

        # h1(T) is affine in the initial slope guess s
        r0, r1 = shoot(0.0), shoot(1.0)
        f0, f1 = r0.y[0, -1], r1.y[0, -1]
        sol = shoot(-f0 / (f1 - f0))

        def evaluate(t):
            v = sol.sol(np.clip(np.asarray(t, dtype=float), 0.0, p.T))
            return v[0][()], v[1][()]

        return evaluate


def mean_inventory_explicit(t, params: ModelParams, E0: float):
    """The explicit E(t); undefined without contagion, so ``alpha = 0`` is rejected."""
    alpha = params.alpha_active if params.split_mode else params.alpha
    if alpha == 0:
        raise ConfigError("explicit E(t) divides by alpha; use ClosedFormSolution for alpha = 0")
    return ClosedFormSolution(params, E0).mean_inventory(t)
