"""Action containers, the C1..C12 feasibility predicates and the projections
that repair infeasible actions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .errors import ProjectionError

ALL_CONSTRAINTS = tuple(f"C{i}" for i in range(1, 13))
_TOL = 1e-9


@dataclass
class ActionL1:
    """Per-UAV decision of the lower layer: velocity, WET flag, WDC flag."""

    velocity: np.ndarray        # (M, 3) m/s
    wet: np.ndarray             # (M,) 0/1
    collect: np.ndarray = None  # (M,) 0/1, all ones when omitted

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(-1, 3)
        self.wet = np.asarray(self.wet, dtype=np.int8).reshape(-1)
        if self.collect is None:
            self.collect = np.ones(len(self.wet), dtype=np.int8)
        self.collect = np.asarray(self.collect, dtype=np.int8).reshape(-1)

    def copy(self) -> "ActionL1":
        return ActionL1(self.velocity.copy(), self.wet.copy(), self.collect.copy())


def wet_from_scalar(x) -> np.ndarray:
    """Quantise the continuous WET output: positive maps to 1, the rest to 0."""
    return (np.asarray(x, dtype=float) > 0).astype(np.int8)


@dataclass
class ActionL2:
    """Upper-layer decision.

    ``orbit[m]`` is the orbit whose nearest satellite UAV m uses (-1: idle).
    ``power`` is per subchannel.  ``band[m]`` is the fraction of the Y^S
    subchannels UAV m occupies and ``time_share[m]`` the fraction of the slot
    it may transmit.  With ``access == "noma"`` UAVs on one satellite share
    the orbit's band and are decoded by SIC; with ``"orthogonal"`` they never
    interfere.
    """

    orbit: np.ndarray
    power: np.ndarray
    rho: np.ndarray
    band: np.ndarray
    time_share: np.ndarray
    access: str = "noma"

    def __post_init__(self):
        self.orbit = np.asarray(self.orbit, dtype=int).reshape(-1)
        self.power = np.asarray(self.power, dtype=float).reshape(-1)
        self.rho = np.asarray(self.rho, dtype=float).reshape(-1)
        self.band = np.asarray(self.band, dtype=float).reshape(-1)
        self.time_share = np.asarray(self.time_share, dtype=float).reshape(-1)
        if self.access not in ("noma", "orthogonal"):
            raise ValueError(f"unknown access mode {self.access!r}")

    def copy(self) -> "ActionL2":
        return ActionL2(self.orbit.copy(), self.power.copy(), self.rho.copy(), self.band.copy(),
                        self.time_share.copy(), self.access)

    def assignment(self, n_orbits: int, sats: list[int], sats_per_orbit: int) -> np.ndarray:
        """(M, K, L) one-hot UAV-satellite scheduling tensor."""
        out = np.zeros((len(self.orbit), n_orbits, sats_per_orbit), dtype=np.int8)
        for m, k in enumerate(self.orbit):
            if k >= 0:
                out[m, k, sats[k]] = 1
        return out


@dataclass
class Verdict:
    constraint: str
    ok: bool
    detail: str = ""


@dataclass
class SlotSnapshot:
    """Everything a slot applied, as needed by the predicates.

    Fields left as ``None`` mark constraints that do not apply.
    """

    prev_positions: np.ndarray | None = None
    positions: np.ndarray | None = None
    velocity: np.ndarray | None = None
    S: np.ndarray | None = None
    C: np.ndarray | None = None
    l2: ActionL2 | None = None
    in_service: np.ndarray | None = None
    harvest_before: np.ndarray | None = None
    harvest_gain: np.ndarray | None = None
    a2s_energy: np.ndarray | None = None
    harvest_after: np.ndarray | None = None
    battery: np.ndarray | None = None
    at_end: bool = False


def check_feasible(cfg: ScenarioConfig, snap: SlotSnapshot) -> list[Verdict]:
    """Evaluate every applicable constraint; pure."""
    out: list[Verdict] = []

    def add(name, ok, detail=""):
        out.append(Verdict(name, bool(ok), "" if ok else detail))

    if snap.velocity is not None:
        speed = np.linalg.norm(snap.velocity, axis=1)
        add("C1", np.all(speed <= cfg.v_max * (1 + _TOL)), f"max speed {speed.max():.6g}")
    if snap.positions is not None:
        p = np.asarray(snap.positions, dtype=float)
        inside = (p[:, 0] >= -_TOL) & (p[:, 0] <= cfg.area_width + _TOL) & \
                 (p[:, 1] >= -_TOL) & (p[:, 1] <= cfg.area_side + _TOL)
        add("C2", np.all(inside), f"UAVs outside area: {np.flatnonzero(~inside).tolist()}")
        if len(p) > 1:
            d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
            d[np.diag_indices(len(p))] = np.inf
            add("C6", d.min() >= cfg.d_min * (1 - _TOL), f"min separation {d.min():.6g}")
        else:
            add("C6", True)
        z = p[:, 2]
        add("C7", np.all((z >= cfg.alt_min - _TOL) & (z <= cfg.alt_max + _TOL)), f"altitudes {z.tolist()}")
    if snap.S is not None:
        S = np.asarray(snap.S)
        add("C3", np.all(S.sum(axis=1) <= 1), "GT scheduled to several UAVs")
        add("C4", np.all(S.sum(axis=0) <= cfg.g2a_subchannels), "UAV over subchannel budget")
        if snap.C is not None:
            add("C8", np.array_equal(np.asarray(snap.C) * S, S), "GT scheduled outside coverage")
    if snap.battery is not None and snap.at_end:
        b = np.asarray(snap.battery)
        add("C5", np.all(b >= cfg.uav_batt_min), f"end battery {b.min():.6g} < B_min")
    if snap.l2 is not None:
        a = snap.l2
        active = a.orbit >= 0
        budget_ok = a.rho.sum() <= 1 + _TOL and np.all(a.rho >= -_TOL)
        for k in range(len(a.rho)):
            on_k = a.orbit == k
            if not on_k.any():
                continue
            if a.access == "noma":
                budget_ok &= bool(np.all(a.band[on_k] <= a.rho[k] + _TOL))
            else:
                budget_ok &= bool((a.band[on_k] * a.time_share[on_k]).sum() <= a.rho[k] + _TOL)
        budget_ok &= bool(np.all((a.time_share >= -_TOL) & (a.time_share <= 1 + _TOL)))
        add("C9", budget_ok, f"subchannel ratios {a.rho.tolist()} sum {a.rho.sum():.6g}")
        pw = a.power[active]
        add("C10", np.all((pw > 0) & (pw <= cfg.uav_tx_power_max * (1 + _TOL))), f"powers {pw.tolist()}")
        c11 = np.all(a.orbit < len(a.rho))
        if snap.in_service is not None and active.any():
            serv = np.asarray(snap.in_service, dtype=bool)
            idx = a.orbit[active]
            c11 &= bool(np.all(idx < len(serv))) and bool(np.all(serv[idx[idx < len(serv)]]))
        add("C11", c11, "UAV assigned to a missing or out-of-service satellite")
    if snap.harvest_after is not None:
        hb0 = np.asarray(snap.harvest_before, dtype=float)
        gain = np.asarray(snap.harvest_gain, dtype=float)
        spent = np.asarray(snap.a2s_energy, dtype=float)
        hb1 = np.asarray(snap.harvest_after, dtype=float)
        expect = np.minimum(hb0 + gain - spent, cfg.uav_harvest_cap)
        ok = np.all(np.abs(hb1 - expect) <= 1e-9 * np.maximum(1.0, np.abs(expect))) and \
            np.all(hb1 >= -_TOL) and np.all(hb1 <= cfg.uav_harvest_cap + _TOL)
        add("C12", ok, f"harvest board {hb1.tolist()} expected {expect.tolist()}")
    return out


def violations(verdicts: list[Verdict]) -> list[str]:
    return [v.constraint for v in verdicts if not v.ok]


# --- projections -----------------------------------------------------------------

@dataclass
class ProjectionLog:
    entries: list = field(default_factory=list)

    def add(self, uav: int, constraint: str, note: str) -> None:
        self.entries.append((uav, constraint, note))


def project_motion(positions: np.ndarray, velocity: np.ndarray, cfg: ScenarioConfig,
                   log: ProjectionLog | None = None) -> np.ndarray:
    """Smallest-change repair of UAV velocities so the next positions satisfy C1, C2, C6, C7.

    Speed is scaled down onto the C1 ball (direction kept), the target is
    clipped into the C2/C7 box, then UAVs are placed in index order: each tries
    its full step and shrunk versions of it, keeping the first that clears
    ``d_min`` from the already placed UAVs and from the current positions of
    the UAVs still to move.  Standing still always qualifies when the current
    formation is itself separated.
    """
    q = np.asarray(positions, dtype=float)
    v = np.array(velocity, dtype=float).reshape(q.shape)
    tau = cfg.slot_seconds
    m_count = len(q)
    if m_count > 1:
        d0 = np.linalg.norm(q[:, None] - q[None], axis=-1)
        np.fill_diagonal(d0, np.inf)
        if d0.min() < cfg.d_min * (1 - _TOL):
            raise ProjectionError(("C6",), "current formation already violates the safe distance")
    speed = np.linalg.norm(v, axis=1)
    fast = speed > cfg.v_max
    if fast.any():
        v[fast] *= (cfg.v_max / speed[fast])[:, None]
        if log is not None:
            for m in np.flatnonzero(fast):
                log.add(int(m), "C1", f"speed {speed[m]:.3f} scaled to {cfg.v_max}")
    lo = np.array([0.0, 0.0, cfg.alt_min])
    hi = np.array([cfg.area_width, cfg.area_side, cfg.alt_max])
    target = q + v * tau
    clipped = np.clip(target, lo, hi)
    if log is not None:
        for m in np.flatnonzero(np.any(clipped != target, axis=1)):
            log.add(int(m), "C2/C7", "target clipped into the flight box")
    step = clipped - q
    placed = q.copy()
    for m in range(m_count):
        others_fixed = placed[:m]
        others_waiting = q[m + 1:]
        chosen = 0.0
        for s in (1.0, 0.75, 0.5, 0.25, 0.1):
            cand = q[m] + s * step[m]
            near = np.concatenate([others_fixed, others_waiting])
            if len(near) == 0 or np.linalg.norm(near - cand, axis=1).min() >= cfg.d_min * (1 + _TOL):
                chosen = s
                break
        if chosen < 1.0 and log is not None and np.any(step[m] != 0):
            log.add(m, "C6", f"step shrunk to {chosen:g}")
        placed[m] = q[m] + chosen * step[m]
    return (placed - q) / tau


def project_l2(action: ActionL2, in_service, cfg: ScenarioConfig) -> ActionL2:
    """Repair an upper-layer action so C9..C11 hold."""
    a = action.copy()
    in_service = np.asarray(in_service, dtype=bool)
    k_count = len(in_service)
    bad = (a.orbit >= k_count) | ((a.orbit >= 0) & ~in_service[np.clip(a.orbit, 0, k_count - 1)])
    a.orbit[bad] = -1
    lo = cfg.min_tx_power
    a.power = np.clip(np.nan_to_num(a.power, nan=lo), lo, cfg.uav_tx_power_max)
    a.rho = np.clip(np.nan_to_num(a.rho), 0.0, None)
    if a.rho.sum() > 1.0:
        a.rho = a.rho / a.rho.sum() * (1 - 1e-12)
    a.time_share = np.clip(np.nan_to_num(a.time_share), 0.0, 1.0)
    a.band = np.clip(np.nan_to_num(a.band), 0.0, 1.0)
    for k in range(k_count):
        on_k = a.orbit == k
        if not on_k.any():
            continue
        if a.access == "noma":
            a.band[on_k] = np.minimum(a.band[on_k], a.rho[k])
        else:
            used = (a.band[on_k] * a.time_share[on_k]).sum()
            if used > a.rho[k]:
                a.band[on_k] *= a.rho[k] / used * (1 - 1e-12)
    a.band[a.orbit < 0] = 0.0
    return a


def angle_between(u, v) -> float:
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return math.degrees(math.acos(max(-1.0, min(1.0, float(u @ v) / (nu * nv)))))
