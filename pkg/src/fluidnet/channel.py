"""Port-dependent channel: distance path loss times a correlated Rayleigh field.

The small-scale gain of user ``u`` from site ``b`` at port ``i`` is entry
``g[u, b, i]`` of a circularly-symmetric complex Gaussian field whose
cross-port covariance follows the isotropic-scattering law
``J0(2*pi*|d_i - d_j| / wavelength)``.  Between fading epochs every vector
evolves by a first-order autoregression whose coefficient is the Clarke
temporal correlation at that user's Doppler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .config import RngStream, ScenarioConfig
from .topology import SitePlan, Users

JITTER_START = 1e-12
JITTER_MAX = 1e-3
RESIDUAL_TOL = 1e-8
PIVOT_TOL = 1e-12


class FactorizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PortGrid:
    positions: np.ndarray  # meters along the track
    wavelength: float

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "PortGrid":
        lam = config.wavelength
        span = config.track_length * lam
        return cls(np.arange(config.num_ports) * span / (config.num_ports - 1), lam)

    @property
    def num_ports(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SpatialCovariance:
    sigma: np.ndarray
    factor: np.ndarray  # lower triangular
    jitter: float


def cholesky_psd(a: np.ndarray, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower Cholesky factor of a positive semidefinite matrix.

    Pivots within ``pivot_tol`` of zero are treated as exact zeros and their
    column is left empty, so rank-deficient inputs factor without jitter.
    Raises :class:`FactorizationError` on a clearly negative pivot.
    """
    n = a.shape[0]
    low = np.zeros_like(a, dtype=float)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d < -pivot_tol:
            raise FactorizationError(f"negative pivot {d:.3e} at column {j}")
        if d <= pivot_tol:
            continue
        root = np.sqrt(d)
        low[j, j] = root
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / root
    return low


def covariance_from_positions(positions: np.ndarray, wavelength: float) -> SpatialCovariance:
    positions = np.asarray(positions, dtype=float)
    sep = np.abs(positions[:, None] - positions[None, :])
    sigma = j0(2.0 * np.pi * sep / wavelength)
    eye = np.eye(len(positions))
    eps = 0.0
    while True:
        target = sigma + eps * eye
        try:
            low = cholesky_psd(target)
            if np.max(np.abs(low @ low.T - target)) <= RESIDUAL_TOL:
                return SpatialCovariance(sigma, low, eps)
        except FactorizationError:
            pass
        eps = JITTER_START if eps == 0.0 else 2.0 * eps
        if eps > JITTER_MAX:
            raise FactorizationError("spatial covariance could not be factored with jitter ≤ 1e-3")


def build_covariance(config: ScenarioConfig) -> SpatialCovariance:
    grid = PortGrid.from_config(config)
    return covariance_from_positions(grid.positions, grid.wavelength)


def complex_normal(rng: RngStream, shape) -> np.ndarray:
    """i.i.d. CN(0, 1): independent real/imaginary parts of variance 1/2."""
    z = rng.gen.standard_normal(tuple(shape) + (2,))
    z *= np.sqrt(0.5)
    return z.view(np.complex128)[..., 0]


@dataclass
class FadingField:
    gains: np.ndarray   # (U, C, N) complex
    rho: np.ndarray     # (U,) per-user epoch correlation
    cov: SpatialCovariance

    def vector(self, u: int, b: int) -> np.ndarray:
        return self.gains[u, b]


def correlated_draw(cov: SpatialCovariance, rng: RngStream, pairs: tuple[int, ...]) -> np.ndarray:
    n = cov.factor.shape[0]
    return complex_normal(rng, pairs + (n,)) @ cov.factor.T


def temporal_correlation(speeds, config: ScenarioConfig) -> np.ndarray:
    doppler = np.asarray(speeds, dtype=float) / config.wavelength
    return np.clip(j0(2.0 * np.pi * doppler * config.epoch_seconds), 0.0, 1.0)


def init_fading(users: Users, plan: SitePlan, cov: SpatialCovariance, rng: RngStream,
                config: ScenarioConfig | None = None) -> FadingField:
    gains = correlated_draw(cov, rng, (len(users), plan.num_cells))
    rho = temporal_correlation(users.speeds, config) if config is not None else np.ones(len(users))
    return FadingField(gains, rho, cov)


def step_fading(field: FadingField, config: ScenarioConfig, rng: RngStream, speeds=None) -> FadingField:
    """One AR(1) epoch update in place: g <- rho*g + sqrt(1-rho^2) * L w."""
    if speeds is not None:
        field.rho = temporal_correlation(speeds, config)
    innov = correlated_draw(field.cov, rng, field.gains.shape[:2])
    rho = field.rho[:, None, None]
    field.gains *= rho
    field.gains += np.sqrt(1.0 - rho * rho) * innov
    return field


def pathloss_db(distance, config: ScenarioConfig):
    d = np.maximum(np.asarray(distance, dtype=float), config.min_link_distance)
    return config.pathloss_ref + 10.0 * config.pathloss_exponent * np.log10(d)


def large_scale_gain(user_pos, site_pos, config: ScenarioConfig, shadow_db=0.0):
    """Linear large-scale power gain; broadcasts over leading dimensions."""
    diff = np.asarray(user_pos, dtype=float) - np.asarray(site_pos, dtype=float)
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return 10.0 ** (-(pathloss_db(dist, config) + shadow_db) / 10.0)


def draw_shadowing(num_users: int, num_cells: int, config: ScenarioConfig, rng: RngStream) -> np.ndarray:
    if not config.shadowing_enabled:
        return np.zeros((num_users, num_cells))
    return rng.gen.normal(0.0, config.shadowing_sigma, size=(num_users, num_cells))


def large_scale_matrix(users: Users, plan: SitePlan, config: ScenarioConfig, shadow_db) -> np.ndarray:
    return large_scale_gain(users.positions[:, None, :], plan.sites[None, :, :], config, shadow_db)


def channel_gain(field: FadingField, u: int, b: int, port: int, user_pos, site_pos,
                 config: ScenarioConfig, shadow_db: float = 0.0) -> float:
    n = field.gains.shape[2]
    if not 0 <= port < n:
        raise IndexError(f"port {port} outside [0, {n})")
    g = field.gains[u, b, port]
    return float(large_scale_gain(user_pos, site_pos, config, shadow_db) * (g.real * g.real + g.imag * g.imag))


class Channel:
    """Engine-side bundle of field, geometry and shadowing for fast lookups."""

    def __init__(self, config: ScenarioConfig, plan: SitePlan, users: Users,
                 fading_rng: RngStream, shadow_rng: RngStream):
        self.config = config
        self.plan = plan
        self.users = users
        self.grid = PortGrid.from_config(config)
        self.cov = build_covariance(config)
        self.shadow_db = draw_shadowing(len(users), plan.num_cells, config, shadow_rng)
        self.field = init_fading(users, plan, self.cov, fading_rng, config)
        self.fading_rng = fading_rng
        self.refresh_large_scale()

    def refresh_large_scale(self) -> None:
        self.large_scale = large_scale_matrix(self.users, self.plan, self.config, self.shadow_db)

    def step(self) -> None:
        step_fading(self.field, self.config, self.fading_rng, self.users.speeds)

    def gain(self, u: int, b: int, port: int) -> float:
        return channel_gain(self.field, u, b, port, self.users.positions[u], self.plan.sites[b],
                            self.config, self.shadow_db[u, b])

    def port_gains(self, u: int, b: int) -> np.ndarray:
        g = self.field.gains[u, b]
        return self.large_scale[u, b] * (g.real ** 2 + g.imag ** 2)

    def gain_matrix(self, ports) -> np.ndarray:
        """(U, C) linear gains with site ``b`` at port ``ports[b]``."""
        cells = np.arange(self.plan.num_cells)
        g = self.field.gains[:, cells, np.asarray(ports)]
        return self.large_scale * (g.real ** 2 + g.imag ** 2)
