"""Model parameters, acceptance region, boundary smoothing and the scenario library."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError


@dataclass(frozen=True)
class ModelParams:
    """Economic and noise constants of the banking game.

    Exactly one contagion mode is active: a single weight ``alpha``, or the
    pair ``alpha_active`` / ``alpha_liq`` (with ``alpha`` set to ``None``).
    """

    alpha: float | None = 1.0
    kappa: float = 20.0
    gamma: float = 0.0
    mu_ex: float = 0.0
    sigma_A: float = 0.1
    sigma_Q: float = 1.4
    sigma_S: float = 2.0
    beta: float = 3.0
    c: float = 5.0
    T: float = 1.0
    epsilon: float = 0.05
    alpha_active: float | None = None
    alpha_liq: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if not 0 < self.epsilon < self.T:
            raise ConfigError(f"epsilon must lie in (0, T), got {self.epsilon}")
        if not self.sigma_Q > 0:
            raise ConfigError("sigma_Q must be positive (uniform parabolicity)")
        if self.gamma < 0 or self.beta < 0 or self.c < 0:
            raise ConfigError("gamma, beta and c must be nonnegative")
        split = (self.alpha_active, self.alpha_liq)
        if self.alpha is None:
            if None in split:
                raise ConfigError("split mode needs both alpha_active and alpha_liq")
        elif split != (None, None):
            raise ConfigError("give either alpha or (alpha_active, alpha_liq), not both")

    @property
    def split_mode(self) -> bool:
        return self.alpha is None

    def check_parabolic(self, q_nodes) -> None:
        a = self.sigma_A**2 + self.sigma_S**2 * np.asarray(q_nodes) ** 2
        if np.any(a <= 0):
            raise ConfigError("sigma_A^2 + sigma_S^2 q^2 must be positive on the grid")


@dataclass(frozen=True)
class GridSpec:
    """Uniform (t, q, x) lattice. Arrays over the state grid have shape ``(n_q+1, n_x+1)``.

    The default bounds keep the inventory marginal (which spreads to a standard
    deviation of about 1.4 by T) several deviations away from the q edges, keep
    upward-drifting high-inventory banks below x_max, put q=7 and x=32 on nodes
    for both built-in step counts, and keep the explicit density step below
    CFL 0.9 at the larger of them.
    """

    q_min: float = -3.5
    q_max: float = 11.5
    x_min: float = 0.0
    x_max: float = 160.0
    n_t: int = 1000
    n_q: int = 50
    n_x: int = 150

    def __post_init__(self):
        if min(self.n_t, self.n_q, self.n_x) < 2:
            raise ConfigError("n_t, n_q and n_x must all be >= 2")
        if not (self.q_min < self.q_max and self.x_min < self.x_max):
            raise ConfigError("grid bounds must satisfy min < max")

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_q + 1, self.n_x + 1)

    @property
    def q(self) -> np.ndarray:
        return self.q_min + np.arange(self.n_q + 1) * self.dq

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_x + 1) * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.x, indexing="ij")

    def dt(self, T: float) -> float:
        return T / self.n_t

    def times(self, T: float) -> np.ndarray:
        return np.arange(self.n_t + 1) * (T / self.n_t)

    def refined(self, factor: int = 2) -> GridSpec:
        return dataclasses.replace(
            self, n_t=self.n_t * factor, n_q=self.n_q * factor, n_x=self.n_x * factor
        )


@dataclass(frozen=True)
class InitialDistribution:
    """Bivariate normal with diagonal covariance, ``mean=(q, x)``, ``var=(var_q, var_x)``."""

    mean: tuple[float, float] = (5.0, 60.0)
    var: tuple[float, float] = (0.1, 15.0)

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "var", tuple(float(v) for v in self.var))
        if min(self.var) <= 0:
            raise ConfigError("initial variances must be positive")

    def pdf(self, q, x):
        (mq, mx), (vq, vx) = self.mean, self.var
        return np.exp(-0.5 * ((q - mq) ** 2 / vq + (x - mx) ** 2 / vx)) / (
            2 * np.pi * np.sqrt(vq * vx)
        )


@dataclass(frozen=True)
class ScenarioConfig:
    id: int | str
    params: ModelParams
    grid: GridSpec
    initial: InitialDistribution
    regulated: bool = True
    inner_tol: float = 1e-8
    outer_tol: float = 1e-6
    max_inner: int = 200
    max_outer: int = 100
    # relaxation of the drift path between outer iterations (1 = undamped)
    theta: float = 1.0
    # shift inside the q(mu_ex + alpha mu + delta) D_x m transport block
    delta: float = 0.0
    dx_floor: float = 1e-8
    # False switches the boundary value to k(t)(beta q + c)
    boundary_abs_q: bool = True
    # "implicit" (sparse solve, Hamiltonian lagged) or "jacobi" (plain fixed-point sweep)
    hjb_scheme: str = "implicit"
    mass_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
        if self.hjb_scheme not in ("implicit", "jacobi"):
            raise ConfigError(f"unknown hjb_scheme {self.hjb_scheme!r}")
        self.params.check_parabolic(self.grid.q)

    @property
    def dt(self) -> float:
        return self.grid.dt(self.params.T)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times(self.params.T)

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def with_params(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, params=dataclasses.replace(self.params, **changes))

    def with_grid(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, grid=dataclasses.replace(self.grid, **changes))

    def with_initial(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, initial=dataclasses.replace(self.initial, **changes))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["initial"] = {"mean": list(self.initial.mean), "var": list(self.initial.var)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        try:
            params = ModelParams(**d.pop("params"))
            grid = GridSpec(**d.pop("grid"))
            init = d.pop("initial")
            initial = InitialDistribution(mean=tuple(init["mean"]), var=tuple(init["var"]))
            return cls(params=params, grid=grid, initial=initial, **d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario document: {exc}") from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def in_acceptance_region(q, x, beta, c):
    """True where ``x > beta*|q| + c``; the region is open, so the boundary is excluded."""
    return np.asarray(x) > beta * np.abs(q) + c


def acceptance_mask(grid: GridSpec, params: ModelParams) -> np.ndarray:
    Q, X = grid.mesh()
    return in_acceptance_region(Q, X, params.beta, params.c)


def boundary_weight(t, T, epsilon):
    """Smooth ramp k(t): about 0 for t <= T - epsilon, about 1 at T, nondecreasing."""
    s = np.asarray(t, dtype=float) - T + epsilon
    out = (s + np.sqrt(0.0004 + s * s)) / (2 * epsilon)
    return float(out) if out.ndim == 0 else out


def boundary_values(t: float, grid: GridSpec, params: ModelParams, abs_q: bool = True) -> np.ndarray:
    """k(t) * (beta*|q| + c) on the full state grid (only A^c nodes are used)."""
    Q, _ = grid.mesh()
    qq = np.abs(Q) if abs_q else Q
    return boundary_weight(t, params.T, params.epsilon) * (params.beta * qq + params.c)


def initial_density(
    dist: InitialDistribution,
    grid: GridSpec,
    region_mask: np.ndarray | None = None,
    mass_floor: float = 1e-10,
) -> np.ndarray:
    """Gaussian sampled on the nodes, truncated to ``region_mask`` and renormalised.

    ``region_mask=None`` keeps every node (unregulated runs).
    """
    Q, X = grid.mesh()
    m = dist.pdf(Q, X)
    if region_mask is not None:
        m = np.where(region_mask, m, 0.0)
    mass = m.sum() * grid.dq * grid.dx
    if not mass > mass_floor:
        raise ConfigError(
            f"initial distribution has mass {mass:.3g} on the grid/region (floor {mass_floor:g})"
        )
    return m / mass


SHARED_PARAMS = dict(gamma=0.0, sigma_Q=1.4, sigma_S=2.0, sigma_A=0.1, beta=3.0, c=5.0, T=1.0)
FULL_GRID = GridSpec(n_t=1000, n_q=50, n_x=150)
DESK_GRID = GridSpec(n_t=200, n_q=30, n_x=60)

_TABLE = {
    1: dict(mean=(5.0, 60.0), params=dict(alpha=1.0, kappa=20.0, mu_ex=1.6)),
    2: dict(mean=(5.0, 60.0), params=dict(alpha=1.0, kappa=20.0, mu_ex=-1.6)),
    3: dict(mean=(5.0, 70.0), params=dict(alpha=1.0, kappa=20.0, mu_ex=-1.6)),
    4: dict(
        mean=(5.0, 60.0),
        params=dict(alpha=None, kappa=20.0, mu_ex=-1.6, alpha_active=0.8, alpha_liq=0.2),
    ),
}


def scenario(n: int, grid: GridSpec | None = None, **overrides) -> ScenarioConfig:
    """Scenario ``n`` (1-4) of the built-in library, optionally on another grid."""
    if n not in _TABLE:
        raise ConfigError(f"unknown scenario {n}; the library has {sorted(_TABLE)}")
    row = _TABLE[n]
    params = ModelParams(**SHARED_PARAMS, **row["params"])
    cfg = ScenarioConfig(
        id=n,
        params=params,
        grid=grid or FULL_GRID,
        initial=InitialDistribution(mean=row["mean"], var=(0.1, 15.0)),
    )
    return cfg.replace(**overrides) if overrides else cfg


def scenario_library(grid: GridSpec | None = None) -> list[ScenarioConfig]:
    return [scenario(n, grid) for n in sorted(_TABLE)]


def dump_scenarios(configs, stream=None):
    """Write scenarios as a multi-document YAML stream (one document per scenario)."""
    return yaml.safe_dump_all([c.to_dict() for c in configs], stream, sort_keys=True)


def load_scenarios(stream) -> list[ScenarioConfig]:
    try:
        docs = [d for d in yaml.safe_load_all(stream) if d is not None]
    except yaml.YAMLError as exc:
        raise ConfigError(f"unreadable scenario file: {exc}") from exc
    if not all(isinstance(d, dict) for d in docs):
        raise ConfigError("every scenario document must be a mapping")
    return [ScenarioConfig.from_dict(d) for d in docs]


def load_scenario_file(path) -> list[ScenarioConfig]:
    with open(path) as fh:
        return load_scenarios(fh)
