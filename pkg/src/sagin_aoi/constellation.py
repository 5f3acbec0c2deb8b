"""Circular coplanar LEO orbits over the service area.

Each orbit carries ``L`` equally spaced satellites moving at constant speed.
Angles are central angles measured from the zenith of the area centre, so a
satellite at angle 0 is directly overhead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class LeoOrbit:
    altitude: float
    n_sats: int
    speed: float
    phase: float = 0.0
    earth_radius: float = 6371e3

    @property
    def radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.radius / self.speed

    @property
    def angular_rate(self) -> float:
        return self.speed / self.radius

    def angles(self, t: float) -> np.ndarray:
        """Central angle of every satellite at time ``t`` (s), wrapped to [-pi, pi)."""
        raw = self.phase + 2.0 * math.pi * np.arange(self.n_sats) / self.n_sats + self.angular_rate * t
        return (raw + math.pi) % (2.0 * math.pi) - math.pi

    def positions(self, t: float) -> np.ndarray:
        """(L, 3) Earth-centred positions; the orbit lies in the x-z plane."""
        a = self.angles(t)
        return np.stack([self.radius * np.sin(a), np.zeros_like(a), self.radius * np.cos(a)], axis=1)


@dataclass(frozen=True)
class SatWindow:
    coverage_angle: float   # half-angle (rad) of the service arc
    coverage_time: float    # s
    interval: float         # s between consecutive satellites
    service_time: float     # s
    wait_time: float        # s


def coverage_geometry(min_elevation: float, earth_radius: float, altitude: float,
                      sat_speed: float) -> tuple[float, float]:
    """Coverage half-angle (rad) and single-pass coverage time (s)."""
    r = earth_radius + altitude
    omega_c = math.acos(earth_radius * math.cos(min_elevation) / r) - min_elevation
    return omega_c, 2.0 * r * omega_c / sat_speed


def elevation_from_central_angle(central_angle: float, earth_radius: float, altitude: float) -> float:
    """Elevation (rad) of a satellite seen from the ground at the given central angle."""
    r = earth_radius + altitude
    return math.atan2(math.cos(central_angle) - earth_radius / r, math.sin(abs(central_angle)))


def sat_interval(n_sats: int, radius: float, sat_speed: float) -> float:
    if n_sats < 1:
        raise ValueError("need at least one satellite per orbit")
    return 2.0 * math.pi * radius / (n_sats * sat_speed)


def sat_window(cfg: ScenarioConfig, n_sats: int | None = None) -> SatWindow:
    """Service / wait split of one inter-satellite interval.

    Service time is ``min(interval, coverage)`` and wait time
    ``max(interval - coverage, 0)``; they always add up to the interval.
    """
    n_sats = cfg.sats_per_leo if n_sats is None else n_sats
    omega_c, t_cov = coverage_geometry(cfg.min_elevation, cfg.earth_radius, cfg.leo_altitude, cfg.sat_speed)
    t_k = sat_interval(n_sats, cfg.orbit_radius, cfg.sat_speed)
    return SatWindow(omega_c, t_cov, t_k, min(t_k, t_cov), max(t_k - t_cov, 0.0))


class Constellation:
    """K coplanar orbits with independent phase offsets."""

    def __init__(self, cfg: ScenarioConfig, phases, n_sats: int | None = None):
        n_sats = cfg.sats_per_leo if n_sats is None else n_sats
        self.cfg = cfg
        self.orbits = [LeoOrbit(cfg.leo_altitude, n_sats, cfg.sat_speed, float(p), cfg.earth_radius)
                       for p in phases]
        self.coverage_angle, self.coverage_time = coverage_geometry(
            cfg.min_elevation, cfg.earth_radius, cfg.leo_altitude, cfg.sat_speed)

    @property
    def n_orbits(self) -> int:
        return len(self.orbits)

    @property
    def sats_per_orbit(self) -> int:
        return self.orbits[0].n_sats

    def nearest(self, t: float) -> list[tuple[int, float, bool]]:
        """Per orbit: (satellite index, central angle, in service).

        The nearest satellite is the one with the smallest absolute central
        angle; it is in service when its elevation clears the mask.  The
        service area is small against the orbit so the choice is shared by all
        UAVs.
        """
        out = []
        for orbit in self.orbits:
            a = orbit.angles(t)
            j = int(np.argmin(np.abs(a)))
            out.append((j, float(a[j]), bool(abs(a[j]) <= self.coverage_angle + 1e-12)))
        return out

    def sat_position(self, k: int, j: int, t: float) -> np.ndarray:
        return self.orbits[k].positions(t)[j]


def area_to_ecef(local: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Map local area coordinates (x, y, z) to the Earth-centred frame.

    The area is a flat patch tangent to the sphere at its centre, which sits at
    ``(0, 0, earth_radius)``.
    """
    local = np.atleast_2d(np.asarray(local, dtype=float))
    out = np.empty_like(local)
    out[:, 0] = local[:, 0] - cfg.area_width / 2.0
    out[:, 1] = local[:, 1] - cfg.area_side / 2.0
    out[:, 2] = cfg.earth_radius + local[:, 2]
    return out
