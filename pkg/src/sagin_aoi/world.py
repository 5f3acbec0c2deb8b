"""World construction and the mutable per-episode state."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ConnectivityMatrices, sense_and_cover
from .config import ScenarioConfig
from .constellation import Constellation
from .ground import T_GT, GroundTerminal, aftu_update
from .rng import Purpose, stream
from .uav import Uav


@dataclass
class WorldState:
    cfg: ScenarioConfig
    seed: int
    t: int
    gts: list[GroundTerminal]
    uavs: list[Uav]
    constellation: Constellation
    conn: ConnectivityMatrices | None = None
    S: np.ndarray | None = None          # (N, M) GT-UAV schedule
    sat_assign: np.ndarray | None = None  # (M, K, L) UAV-satellite schedule
    outage: np.ndarray | None = None      # (M, K, L)
    rho: np.ndarray | None = None         # (K,)
    records: list = field(default_factory=list)

    @property
    def gt_positions(self) -> np.ndarray:
        return np.array([g.position for g in self.gts])

    @property
    def uav_positions(self) -> np.ndarray:
        return np.array([u.position for u in self.uavs])

    def gt_array(self, name: str) -> np.ndarray:
        return np.array([getattr(g, name) for g in self.gts])

    def uav_array(self, name: str) -> np.ndarray:
        return np.array([getattr(u, name) for u in self.uavs])

    def refresh_connectivity(self) -> ConnectivityMatrices:
        self.conn = sense_and_cover(self.gt_positions, self.uav_positions, self.cfg)
        return self.conn

    def time(self) -> float:
        return self.t * self.cfg.slot_seconds


def _place_uavs(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    z0 = 0.5 * (cfg.alt_min + cfg.alt_max)
    out: list[np.ndarray] = []
    for _ in range(cfg.n_uavs):
        for _attempt in range(10_000):
            p = np.array([rng.uniform(0, cfg.area_width), rng.uniform(0, cfg.area_side), z0])
            if all(np.linalg.norm(p - q) >= cfg.d_min * 1.01 for q in out):
                out.append(p)
                break
        else:
            raise RuntimeError("cannot place UAVs at the safe distance; area too small")
    return np.array(out)


def init_world(cfg: ScenarioConfig, seed: int) -> WorldState:
    """Fresh world: random GT layout on the ground, UAVs fully charged at
    mid altitude, equally spaced satellites with random orbit phases, empty
    AoI ledgers, t = 0."""
    rng = stream(seed, Purpose.PLACEMENT, 0)
    gt_xy = np.column_stack([rng.uniform(0, cfg.area_width, cfg.n_gts), rng.uniform(0, cfg.area_side, cfg.n_gts)])
    lo, hi = cfg.gt_batt_init_range
    batt = rng.uniform(lo, hi, cfg.n_gts) * cfg.gt_batt_cap
    mode = aftu_update(batt, np.zeros(cfg.n_gts), np.zeros(cfg.n_gts), np.full(cfg.n_gts, T_GT), cfg)
    gts = [GroundTerminal(i, np.array([gt_xy[i, 0], gt_xy[i, 1], 0.0]), float(batt[i]), int(mode[i]))
           for i in range(cfg.n_gts)]
    uav_pos = _place_uavs(cfg, stream(seed, Purpose.PLACEMENT, 1))
    uavs = [Uav(m, uav_pos[m], cfg.uav_batt_cap, cfg.uav_harvest_cap) for m in range(cfg.n_uavs)]
    phases = stream(seed, Purpose.PLACEMENT, 2).uniform(0, 2 * math.pi / cfg.sats_per_leo, cfg.n_leos)
    world = WorldState(cfg, int(seed), 0, gts, uavs, Constellation(cfg, phases))
    world.S = np.zeros((cfg.n_gts, cfg.n_uavs), dtype=np.int8)
    world.sat_assign = np.zeros((cfg.n_uavs, cfg.n_leos, cfg.sats_per_leo), dtype=np.int8)
    world.outage = np.zeros_like(world.sat_assign)
    world.rho = np.zeros(cfg.n_leos)
    world.refresh_connectivity()
    return world
