"""Hexagonal seven-site layout, user drops and confined random-waypoint motion.

Users are stored struct-of-arrays in :class:`Users`, ordered cell-major:
user ``u`` belongs to cell ``u // users_per_cell``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, RngStream, ScenarioConfig

DISC_FACTOR = 1.5


class LayoutError(ConfigError):
    pass


@dataclass(frozen=True)
class SitePlan:
    sites: np.ndarray  # (C, 2) meters
    inter_site_distance: float

    @property
    def num_cells(self) -> int:
        return len(self.sites)

    @property
    def hex_circumradius(self) -> float:
        return self.inter_site_distance / math.sqrt(3.0)

    @property
    def disc_radius(self) -> float:
        return DISC_FACTOR * self.inter_site_distance


@dataclass
class UserState:
    """Snapshot of one user; the simulator itself works on :class:`Users`."""

    position: np.ndarray
    waypoint: np.ndarray
    speed: float
    serving_cell: int
    pf_average_rate: float = 0.0


@dataclass
class Users:
    positions: np.ndarray   # (U, 2)
    waypoints: np.ndarray   # (U, 2)
    speeds: np.ndarray      # (U,)
    serving: np.ndarray     # (U,) int
    pf_average: np.ndarray  # (U,) bits/s

    def __len__(self) -> int:
        return len(self.speeds)

    def __getitem__(self, u: int) -> UserState:
        return UserState(self.positions[u].copy(), self.waypoints[u].copy(), float(self.speeds[u]),
                         int(self.serving[u]), float(self.pf_average[u]))

    def digest(self) -> str:
        """Short hash of the drop, used to show paired seeds share geometry."""
        h = hashlib.sha256(np.ascontiguousarray(self.positions, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.serving, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


def build_layout(config: ScenarioConfig) -> SitePlan:
    if config.num_cells not in (1, 7):
        raise LayoutError(f"unsupported num_cells={config.num_cells}: layouts exist for 7 cells (or 1 isolated site)")
    isd = config.inter_site_distance
    if config.num_cells == 1:
        return SitePlan(np.zeros((1, 2)), isd)
    angles = np.deg2rad(60.0 * np.arange(6))
    ring = isd * np.column_stack([np.cos(angles), np.sin(angles)])
    return SitePlan(np.vstack([[0.0, 0.0], ring]), isd)


# Outward normals of a cell's edges point at the three neighbour directions
# (0°, 60°, 120°); the hexagon is |<x - site, n_k>| ≤ ISD/2 for each k.
_EDGE_NORMALS = np.column_stack([np.cos(np.deg2rad([0.0, 60.0, 120.0])),
                                 np.sin(np.deg2rad([0.0, 60.0, 120.0]))])


def in_cell(points, site, plan: SitePlan) -> np.ndarray:
    """True where points lie in the site's hexagon and inside the network disc."""
    pts = np.atleast_2d(points)
    rel = pts - np.asarray(site)
    proj = np.abs(rel @ _EDGE_NORMALS.T)
    inside_hex = np.all(proj <= plan.inter_site_distance / 2.0 + 1e-9, axis=1)
    inside_disc = np.hypot(pts[:, 0], pts[:, 1]) <= plan.disc_radius + 1e-9
    return inside_hex & inside_disc


def sample_in_cell(plan: SitePlan, cell: int, count: int, rng: RngStream) -> np.ndarray:
    site = plan.sites[cell]
    r = plan.hex_circumradius
    out = np.empty((count, 2))
    filled = 0
    while filled < count:
        cand = site + rng.gen.uniform(-r, r, size=(2 * (count - filled) + 4, 2))
        ok = cand[in_cell(cand, site, plan)]
        take = min(len(ok), count - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def drop_users(plan: SitePlan, config: ScenarioConfig, rng: RngStream) -> Users:
    k = config.users_per_cell
    c = plan.num_cells
    positions = np.empty((c * k, 2))
    waypoints = np.empty((c * k, 2))
    for cell in range(c):
        positions[cell * k:(cell + 1) * k] = sample_in_cell(plan, cell, k, rng)
        waypoints[cell * k:(cell + 1) * k] = sample_in_cell(plan, cell, k, rng)
    lo, hi = config.user_speed
    speeds = rng.gen.uniform(lo, hi, size=c * k)
    serving = np.repeat(np.arange(c), k)
    return Users(positions, waypoints, speeds, serving, np.zeros(c * k))


def step_mobility(users: Users, plan: SitePlan, config: ScenarioConfig, rng: RngStream, dt: float) -> Users:
    """Advance every user by ``dt`` seconds toward its waypoint (in place).

    A user whose waypoint is within ``speed * dt`` lands on it and draws a
    fresh waypoint in its own cell plus a fresh speed; it does not move any
    further that step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    delta = users.waypoints - users.positions
    dist = np.hypot(delta[:, 0], delta[:, 1])
    step = users.speeds * dt
    arrived = dist <= step
    moving = ~arrived
    users.positions[moving] += delta[moving] * (step[moving] / dist[moving])[:, None]
    users.positions[arrived] = users.waypoints[arrived]
    lo, hi = config.user_speed
    for u in np.flatnonzero(arrived):
        users.waypoints[u] = sample_in_cell(plan, int(users.serving[u]), 1, rng)[0]
        users.speeds[u] = rng.gen.uniform(lo, hi)
    return users
