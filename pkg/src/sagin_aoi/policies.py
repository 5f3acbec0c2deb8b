"""Observations, rewards, GT-UAV scheduling and the baseline policies.

Lower-layer (G2A) policies decide UAV motion plus the WET / WDC flags; the
upper-layer (A2S) policies decide the UAV-orbit assignment, per-subchannel
power and the spectrum split.  Every policy is a small class with
``reset(world)`` and ``act(...)`` so learned agents can plug into the same
episode loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .feasibility import ActionL1, ActionL2
from .ground import E_GT, T_GT, eh_curve, nearest_covering_uav

# --- observations --------------------------------------------------------------


@dataclass
class ObservationL1:
    uav: int
    position: np.ndarray
    battery: float
    nbr_idx: np.ndarray
    nbr_pos: np.ndarray
    nbr_batt: np.ndarray
    gt_idx: np.ndarray
    gt_pos: np.ndarray
    gt_batt: np.ndarray
    gt_mode: np.ndarray
    gt_aoi: np.ndarray
    gt_cum: np.ndarray
    gt_priority: np.ndarray  # broadcast with the GT's access request

    def gt_features(self) -> np.ndarray:
        return np.column_stack([self.gt_pos, self.gt_batt, self.gt_mode, self.gt_aoi, self.gt_cum]) \
            if len(self.gt_idx) else np.zeros((0, 7))

    def uav_features(self) -> np.ndarray:
        return np.column_stack([self.nbr_pos, self.nbr_batt]) if len(self.nbr_idx) else np.zeros((0, 4))


def build_observation(world, m: int) -> ObservationL1:
    conn = world.conn
    gts = np.flatnonzero(conn.G[:, m])
    nbrs = np.flatnonzero(conn.U[:, m])
    gpos = world.gt_positions
    upos = world.uav_positions
    return ObservationL1(
        uav=m,
        position=upos[m].copy(),
        battery=float(world.uavs[m].battery),
        nbr_idx=nbrs,
        nbr_pos=upos[nbrs].reshape(-1, 3),
        nbr_batt=np.array([world.uavs[i].battery for i in nbrs], dtype=float),
        gt_idx=gts,
        gt_pos=gpos[gts].reshape(-1, 3),
        gt_batt=np.array([world.gts[n].battery for n in gts], dtype=float),
        gt_mode=np.array([world.gts[n].mode for n in gts], dtype=float),
        gt_aoi=np.array([world.gts[n].aoi for n in gts], dtype=float),
        gt_cum=np.array([world.gts[n].cum_bits for n in gts], dtype=float),
        gt_priority=np.array([world.gts[n].priority for n in gts], dtype=float),
    )


@dataclass
class StateL2:
    uav_aoi: np.ndarray       # (M,)
    pending: np.ndarray       # (M,) forwardable bits
    harvest: np.ndarray       # (M,) harvest board plus this slot's solar energy (J)
    gains: np.ndarray         # (M, K) gain to each orbit's nearest satellite, 0 if out of service
    in_service: np.ndarray    # (K,)
    sat_positions: np.ndarray  # (K_in_service, 3)
    central_angle: np.ndarray  # (K,)


def build_state(world, gains, in_service, angles, sat_positions) -> StateL2:
    cfg = world.cfg
    return StateL2(
        uav_aoi=np.array([u.aoi for u in world.uavs], dtype=float),
        pending=np.array([u.ledger.backlog_bits(world.t, cfg.packet_bits) for u in world.uavs]),
        harvest=np.array([u.harvest_batt + u.harvested for u in world.uavs]),
        gains=np.asarray(gains, dtype=float),
        in_service=np.asarray(in_service, dtype=bool),
        sat_positions=np.asarray(sat_positions, dtype=float).reshape(-1, 3),
        central_angle=np.asarray(angles, dtype=float),
    )


# --- rewards -------------------------------------------------------------------

def rewards_l1(aoi, sinr, harvested, wet, wet_gains, uav_energy, cfg: ScenarioConfig):
    """Per-UAV WDC, WET and combined rewards.

    ``sinr`` is (N, M) with zeros off the schedule, ``harvested`` the GTs' DC
    energy this slot, ``wet_gains`` the (N, M) gains of the WET links and
    ``uav_energy`` the UAVs' slot consumption.  Zero denominators give 0.
    """
    aoi = np.asarray(aoi, dtype=float)
    sinr = np.asarray(sinr, dtype=float)
    r_wdc = (aoi[:, None] * cfg.g2a_subchannel_hz * np.log2(1.0 + sinr) * cfg.slot_seconds).sum(axis=0)
    contrib = cfg.uav_wet_power * np.asarray(wet, dtype=float)[None, :] * np.asarray(wet_gains, dtype=float)
    total = contrib.sum(axis=1, keepdims=True)
    ratio = np.divide(contrib, total, out=np.zeros_like(contrib), where=total > 0)
    r_wet = (aoi[:, None] * np.asarray(harvested, dtype=float)[:, None] * ratio).sum(axis=0)
    mean_aoi = aoi.mean() if len(aoi) else 0.0
    energy = np.asarray(uav_energy, dtype=float)
    num = cfg.reward_zeta1 * r_wdc + cfg.reward_zeta2 * r_wet
    den = mean_aoi * energy
    r = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return r_wdc, r_wet, r


def reward_l2(uav_aoi, throughput, a2s_energy) -> float:
    """Sum over UAVs of AoI-weighted delivered bits per joule of A2S energy."""
    a = np.asarray(uav_aoi, dtype=float)
    d = np.asarray(throughput, dtype=float)
    e = np.asarray(a2s_energy, dtype=float)
    mean_aoi = a.mean() if len(a) else 0.0
    den = mean_aoi * e
    return float(np.divide(a * d, den, out=np.zeros_like(d), where=den > 0).sum())


# --- scheduling ----------------------------------------------------------------

def gt_uav_scheduling(C, dist_gu, mode, priority, backlog, collect, cfg: ScenarioConfig) -> np.ndarray:
    """Schedule matrix S: each transmit-mode GT with queued data requests its
    nearest covering UAV that is collecting; a UAV with more requests than
    subchannels keeps the highest-priority ones (ties by GT index)."""
    C = np.asarray(C)
    n, m = C.shape
    S = np.zeros((n, m), dtype=np.int8)
    want = (np.asarray(mode) == T_GT) & (np.asarray(backlog) > 0)
    target = nearest_covering_uav(dist_gu, C, allowed=np.asarray(collect) > 0)
    prio = np.asarray(priority, dtype=float)
    for uav in range(m):
        req = np.flatnonzero(want & (target == uav))
        if len(req) > cfg.g2a_subchannels:
            order = np.lexsort((req, -prio[req]))
            req = req[order[: cfg.g2a_subchannels]]
        S[req, uav] = 1
    return S


# --- lower-layer baselines -----------------------------------------------------

def _seek(position, goal_xy, cfg: ScenarioConfig) -> np.ndarray:
    """Velocity that flies toward ``goal_xy`` at up to v_max while descending
    toward the lowest allowed altitude."""
    v = np.zeros(3)
    delta = np.asarray(goal_xy, dtype=float)[:2] - position[:2]
    dist = float(np.linalg.norm(delta))
    dz = cfg.alt_min - position[2]
    budget = cfg.v_max * cfg.slot_seconds
    vz_step = max(-budget, min(budget, dz))
    horiz = math.sqrt(max(budget ** 2 - vz_step ** 2, 0.0))
    if dist > 0:
        v[:2] = delta / dist * min(dist, horiz)
    v[2] = vz_step
    return v / cfg.slot_seconds


def lawnmower_waypoints(m: int, cfg: ScenarioConfig) -> np.ndarray:
    """Boustrophedon sweep of UAV m's vertical strip with lane pitch equal to the coverage range."""
    width = cfg.area_width / cfg.n_uavs
    x0 = m * width
    pitch = cfg.cover_range
    lanes = np.arange(x0 + min(pitch / 2, width / 2), x0 + width, pitch)
    pts = []
    for i, x in enumerate(lanes):
        ys = (0.0, cfg.area_side) if i % 2 == 0 else (cfg.area_side, 0.0)
        pts += [(x, ys[0]), (x, ys[1])]
    return np.array(pts)


def _projected_terms(obs: ObservationL1, cfg: ScenarioConfig) -> tuple[float, float]:
    """Rough one-slot WDC and WET reward terms using LoS gains at the current spot."""
    if len(obs.gt_idx) == 0:
        return 0.0, 0.0
    d = np.linalg.norm(obs.gt_pos - obs.position, axis=1)
    covered = d <= cfg.cover_range
    gain = np.maximum(d, 1.0) ** (-cfg.los_params[0])
    tx = covered & (obs.gt_mode == T_GT)
    eg = covered & (obs.gt_mode == E_GT)
    wdc = float((obs.gt_aoi[tx] * cfg.g2a_subchannel_hz * np.log2(1 + gain[tx] * cfg.gt_tx_power / cfg.g2a_noise)
                 * cfg.slot_seconds).sum())
    rf = cfg.uav_wet_power * gain[eg] * 10 ** (cfg.wet_link_gain_db / 10)
    wet = float((obs.gt_aoi[eg] * np.asarray(eh_curve(rf, cfg)) * cfg.slot_seconds).sum())
    return cfg.reward_zeta1 * wdc, cfg.reward_zeta2 * wet


class L1Policy:
    name = "base"

    def reset(self, world) -> None:
        self.cfg = world.cfg
        self.waypoints = [lawnmower_waypoints(m, world.cfg) for m in range(world.cfg.n_uavs)]
        self.wp_idx = [0] * world.cfg.n_uavs

    def explore(self, obs: ObservationL1) -> np.ndarray:
        m = obs.uav
        wps = self.waypoints[m]
        if len(wps) == 0:
            return np.zeros(3)
        if np.linalg.norm(wps[self.wp_idx[m]] - obs.position[:2]) < 1.0:
            self.wp_idx[m] = (self.wp_idx[m] + 1) % len(wps)
        return _seek(obs.position, wps[self.wp_idx[m]], self.cfg)

    def chase(self, obs: ObservationL1, which=None) -> np.ndarray:
        """Fly to the sensed GT with the highest priority (optionally restricted by mode)."""
        sel = np.ones(len(obs.gt_idx), dtype=bool) if which is None else (obs.gt_mode == which)
        if not sel.any():
            return self.explore(obs)
        idx = np.flatnonzero(sel)
        key = obs.gt_priority[idx] if which != E_GT else obs.gt_aoi[idx]
        best = idx[np.lexsort((obs.gt_idx[idx], -key))[0]]
        return _seek(obs.position, obs.gt_pos[best], self.cfg)

    def act_one(self, obs: ObservationL1, t: int):
        raise NotImplementedError

    def act(self, world) -> ActionL1:
        vel, wet, col = [], [], []
        for m in range(world.cfg.n_uavs):
            v, z, c = self.act_one(build_observation(world, m), world.t)
            vel.append(v)
            wet.append(z)
            col.append(c)
        return ActionL1(np.array(vel), np.array(wet), np.array(col))


def _covered(obs: ObservationL1, cfg: ScenarioConfig, mode: int) -> bool:
    if len(obs.gt_idx) == 0:
        return False
    d = np.linalg.norm(obs.gt_pos - obs.position, axis=1)
    return bool(np.any((d <= cfg.cover_range) & (obs.gt_mode == mode)))


class IsUavGreedy(L1Policy):
    """Concurrent WDC and WET: always collect, radiate whenever an E-GT is covered."""
    name = "is-uav"

    def act_one(self, obs, t):
        return self.chase(obs), int(_covered(obs, self.cfg, E_GT)), 1


class DcUav(L1Policy):
    """Per-slot exclusive choice of WET or WDC, whichever projected reward is larger."""
    name = "dc-uav"

    def act_one(self, obs, t):
        wdc, wet = _projected_terms(obs, self.cfg)
        if wet > wdc:
            return self.chase(obs), 1, 0
        return self.chase(obs), 0, 1


class TdUav(L1Policy):
    """Fixed half/half teams: the first half charges, the second half collects."""
    name = "td-uav"

    def act_one(self, obs, t):
        if obs.uav < self.cfg.n_uavs // 2:
            return self.chase(obs, E_GT), 1, 0
        return self.chase(obs, T_GT), 0, 1


class PdUav(L1Policy):
    """Everyone charges before slot ``t_switch`` and collects afterwards."""
    name = "pd-uav"

    def __init__(self, t_switch: int | None = None):
        self.t_switch = t_switch

    def phase(self, t: int) -> tuple[int, int]:
        if self.t_switch is None:
            raise RuntimeError("t_switch not set; run a pilot search first")
        return (1, 0) if t < self.t_switch else (0, 1)

    def act_one(self, obs, t):
        z, c = self.phase(t)
        return self.chase(obs, E_GT if z else None), z, c


class OUav(PdUav):
    """Trajectory-fixed sweep with the PD-UAV energy rule."""
    name = "o-uav"

    def act_one(self, obs, t):
        z, c = self.phase(t)
        return self.explore(obs), z, c


L1_POLICIES = {cls.name: cls for cls in (IsUavGreedy, DcUav, TdUav, PdUav, OUav)}


def make_l1(name: str, **kw) -> L1Policy:
    try:
        return L1_POLICIES[name](**kw)
    except KeyError:
        raise ValueError(f"unknown L1 policy {name!r}; choose from {sorted(L1_POLICIES)}") from None


# --- upper-layer baselines -----------------------------------------------------

def required_sinr(cfg: ScenarioConfig, margin: float = 2.0) -> float:
    return margin * (2.0 ** (cfg.min_sat_rate / cfg.a2s_subchannel_hz) - 1.0)


def _clip_power(p, band, harvest, cfg: ScenarioConfig):
    """Keep powers inside [min, P_max] and, where possible, within what the harvest board can pay."""
    cap = np.divide(harvest, band * cfg.a2s_subchannels * cfg.slot_seconds,
                    out=np.full_like(harvest, cfg.uav_tx_power_max), where=band > 0)
    hi = np.clip(cap, cfg.min_tx_power, cfg.uav_tx_power_max)
    return np.clip(p, cfg.min_tx_power, hi)


def sic_power(gains, cfg: ScenarioConfig, margin: float = 2.0) -> np.ndarray:
    """Powers giving every UAV on one satellite the decode SINR under SIC.

    Starting from the weakest user (noise only), each stronger user's received
    power must beat the target against everything decoded after it.
    """
    gains = np.asarray(gains, dtype=float)
    order = np.lexsort((np.arange(len(gains)), -gains))
    target = required_sinr(cfg, margin)
    rx = np.zeros(len(gains))
    interference = 0.0
    for j in order[::-1]:
        rx[j] = target * (interference + cfg.a2s_noise)
        interference += rx[j]
    return rx / gains


class L2Policy:
    name = "base"

    def reset(self, world) -> None:
        self.cfg = world.cfg

    def act(self, state: StateL2) -> ActionL2:
        raise NotImplementedError

    def _best_orbit(self, state: StateL2) -> np.ndarray:
        active = state.pending > 0
        orbit = np.full(len(state.pending), -1)
        if not state.in_service.any():
            return orbit
        g = np.where(state.in_service[None, :], state.gains, -np.inf)
        orbit[active] = np.argmax(g[active], axis=1)
        return orbit


class DmlaGreedy(L2Policy):
    """Best-gain orbit per UAV, spectrum split in proportion to pending data,
    NOMA sharing with SIC-aware power."""
    name = "dmla"

    def act(self, state):
        cfg = self.cfg
        k_count = len(state.in_service)
        orbit = self._best_orbit(state)
        load = np.array([state.pending[orbit == k].sum() for k in range(k_count)])
        rho = load / load.sum() if load.sum() > 0 else np.zeros(k_count)
        band = np.where(orbit >= 0, rho[np.clip(orbit, 0, None)], 0.0)
        power = np.full(len(orbit), cfg.fixed_tx_power)
        for k in range(k_count):
            on_k = np.flatnonzero(orbit == k)
            if len(on_k):
                power[on_k] = sic_power(state.gains[on_k, k], cfg)
        power = _clip_power(power, band, state.harvest, cfg)
        return ActionL2(orbit, power, rho, band, np.ones(len(orbit)), "noma")


class Fdpc(L2Policy):
    """Each active UAV gets its own equal slice of spectrum; no sharing."""
    name = "fdpc"

    def act(self, state):
        cfg = self.cfg
        orbit = self._best_orbit(state)
        active = orbit >= 0
        j = int(active.sum())
        band = np.where(active, 1.0 / j if j else 0.0, 0.0)
        rho = np.array([band[orbit == k].sum() for k in range(len(state.in_service))])
        gain = np.where(active, state.gains[np.arange(len(orbit)), np.clip(orbit, 0, None)], 1.0)
        power = _clip_power(required_sinr(cfg) * cfg.a2s_noise / gain, band, state.harvest, cfg)
        return ActionL2(orbit, power, rho, band, np.ones(len(orbit)), "orthogonal")


class Tdfp(L2Policy):
    """Equal time segments per UAV on the overall nearest satellite, full band, fixed power."""
    name = "tdfp"

    def act(self, state):
        cfg = self.cfg
        m_count = len(state.pending)
        orbit = np.full(m_count, -1)
        if state.in_service.any():
            ang = np.where(state.in_service, np.abs(state.central_angle), np.inf)
            orbit[state.pending > 0] = int(np.argmin(ang))
        share = np.full(m_count, 1.0 / m_count)
        band = np.where(orbit >= 0, 1.0, 0.0)
        rho = np.array([(band * share)[orbit == k].sum() for k in range(len(state.in_service))])
        power = np.full(m_count, cfg.fixed_tx_power)
        return ActionL2(orbit, power, rho, band, share, "orthogonal")


class Ftpc(L2Policy):
    """FDMA across satellites, TDMA among the UAVs of one satellite."""
    name = "ftpc"

    def act(self, state):
        cfg = self.cfg
        k_count = len(state.in_service)
        orbit = self._best_orbit(state)
        used = np.array([np.any(orbit == k) for k in range(k_count)])
        rho = np.where(used, 1.0 / max(int(used.sum()), 1), 0.0)
        counts = np.array([np.sum(orbit == k) for k in range(k_count)])
        band = np.where(orbit >= 0, rho[np.clip(orbit, 0, None)], 0.0)
        share = np.where(orbit >= 0, 1.0 / np.maximum(counts[np.clip(orbit, 0, None)], 1), 1.0)
        gain = np.where(orbit >= 0, state.gains[np.arange(len(orbit)), np.clip(orbit, 0, None)], 1.0)
        power = _clip_power(required_sinr(cfg) * cfg.a2s_noise / gain, band * share, state.harvest, cfg)
        return ActionL2(orbit, power, rho, band, share, "orthogonal")


class Uafp(L2Policy):
    """Uniform spectrum per orbit, round-robin orbit assignment, NOMA, fixed power."""
    name = "uafp"

    def act(self, state):
        cfg = self.cfg
        k_count = len(state.in_service)
        rho = np.full(k_count, 1.0 / k_count)
        live = np.flatnonzero(state.in_service)
        orbit = np.full(len(state.pending), -1)
        if len(live):
            for m in range(len(orbit)):
                if state.pending[m] > 0:
                    orbit[m] = live[m % len(live)]
        band = np.where(orbit >= 0, rho[np.clip(orbit, 0, None)], 0.0)
        power = np.full(len(orbit), cfg.fixed_tx_power)
        return ActionL2(orbit, power, rho, band, np.ones(len(orbit)), "noma")


L2_POLICIES = {cls.name: cls for cls in (DmlaGreedy, Fdpc, Tdfp, Ftpc, Uafp)}


def make_l2(name: str, **kw) -> L2Policy:
    try:
        return L2_POLICIES[name](**kw)
    except KeyError:
        raise ValueError(f"unknown L2 policy {name!r}; choose from {sorted(L2_POLICIES)}") from None
