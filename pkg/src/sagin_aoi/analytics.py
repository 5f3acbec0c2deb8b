"""Closed-form AoI expectations, their Monte-Carlo oracles, the satellite
density search and the decoupling-bound checker."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .constellation import SatWindow, sat_window
from .ground import GroundTerminal, PacketLedger, Packet, step_packets_aoi

NEVER_SCHEDULED = math.inf


# --- G2A -----------------------------------------------------------------------

def scheduling_probability(priorities, n: int, y_u: int) -> float:
    """Chance GT ``n`` is kept when its coverage set has ``len(priorities)`` members.

    Everyone is kept when the set fits into the subchannels; otherwise the
    share of members with strictly lower priority than GT n.
    """
    p = np.asarray(priorities, dtype=float)
    if len(p) <= y_u:
        return 1.0
    return float(np.sum(p < p[n]) / len(p))


def expected_interval(q_cover, q_sched) -> float:
    """Mean slots between successful schedules (geometric); inf if never scheduled."""
    miss = float(np.prod(1.0 - np.asarray(q_cover, float) * np.asarray(q_sched, float)))
    if miss >= 1.0:
        return NEVER_SCHEDULED
    return 1.0 / (1.0 - miss)


def expected_g2a_aoi(d_bar, D_bar, e_interval) -> float:
    """Mean per-packet G2A AoI over N GTs, in slots."""
    d_bar = np.asarray(d_bar, dtype=float)
    D_bar = np.asarray(D_bar, dtype=float)
    e = np.asarray(e_interval, dtype=float)
    ratio = np.where(D_bar > 0, np.minimum(np.divide(d_bar, D_bar, out=np.ones_like(d_bar), where=D_bar > 0), 1.0),
                     1.0)
    return float((ratio * (e + 1.0)).sum() / (2 * len(d_bar)))


# --- A2S -----------------------------------------------------------------------

def a2s_terms(win: SatWindow, a_over_D) -> tuple[np.ndarray, np.ndarray]:
    """Per-UAV (waiting part, total) of the expected A2S AoI in seconds."""
    x = np.asarray(a_over_D, dtype=float)
    w, s, k = win.wait_time, win.service_time, win.interval
    waiting = np.full_like(x, (w / k) * (w / 2.0))
    total = (w / k) * (w / 2.0 + x) + (s / k) * x
    return waiting, total


def expected_a2s_aoi(win: SatWindow, a_over_D) -> float:
    """Mean per-packet A2S AoI (s), averaged over UAVs (all satellites of one
    orbit share the same window, so the satellite average is the identity)."""
    return float(a2s_terms(win, a_over_D)[1].mean())


def saoi_proportion(e_g2a: float, win: SatWindow, a_over_D) -> float:
    """Expected share of total AoI accrued while waiting for satellite service."""
    waiting, total = a2s_terms(win, a_over_D)
    denom = e_g2a + float(total.mean())
    return float(waiting.mean()) / denom if denom > 0 else 0.0


@dataclass
class AoiExpectation:
    q_cover: np.ndarray
    q_sched: np.ndarray
    e_interval: np.ndarray
    e_g2a: float
    e_a2s: float
    saoi: float


def expectation_bundle(q_cover, q_sched, d_bar, D_bar, win: SatWindow, a_over_D) -> AoiExpectation:
    qc = np.atleast_2d(np.asarray(q_cover, float))
    qs = np.atleast_2d(np.asarray(q_sched, float))
    e_t = np.array([expected_interval(qc[n], qs[n]) for n in range(len(qc))])
    e_g = expected_g2a_aoi(d_bar, D_bar, e_t)
    return AoiExpectation(qc, qs, e_t, e_g, expected_a2s_aoi(win, a_over_D), saoi_proportion(e_g, win, a_over_D))


# --- Monte-Carlo oracles -------------------------------------------------------

def mc_g2a_aoi(n_gts: int, p_sched: float, d_over_D: float, slots: int, rng: np.random.Generator,
               packet_rate: float = 0.05, packet_bits: float = 1e6) -> float:
    """Per-packet G2A AoI by simulation with the real packet ledger.

    Each GT is scheduled independently with probability ``p_sched`` and then
    sends ``packet_bits / d_over_D`` bits.  A packet that lives ``L`` slots
    carries ages ``1..L``; its AoI is the lifetime mean ``(L+1)/2``.  Returns
    the mean over all delivered packets.
    """
    cfg = ScenarioConfig(n_gts=n_gts, packet_rate=packet_rate, packet_bits=packet_bits)
    gts = [GroundTerminal(n, np.zeros(3), 1.0) for n in range(n_gts)]
    cap = packet_bits / d_over_D
    total, count = 0.0, 0
    sched = rng.random((slots, n_gts)) < p_sched
    for t in range(slots):
        for n, g in enumerate(gts):
            bits = min(cap, g.ledger.backlog_bits(t, packet_bits)) if sched[t, n] else 0.0
            retired, _ = step_packets_aoi(g, bits, t, cfg, rng)
            for p in retired:
                total += (p.age + 1) / 2.0
                count += 1
    return total / count if count else 0.0


def _service_time_needed(arrival: np.ndarray, work: float, win: SatWindow, offset: float) -> np.ndarray:
    """Completion time of ``work`` seconds of transmission that may only run
    inside the periodic service windows ``[offset + j*T^k, offset + j*T^k + T^S)``."""
    k, s = win.interval, win.service_time
    if s <= 0:
        return np.full_like(arrival, np.inf)
    if s >= k:
        return arrival + work
    rel = arrival - offset
    j = np.floor(rel / k)
    pos = rel - j * k
    start_in = np.where(pos < s, pos, k)       # move to next window start when waiting
    left_in_window = s - np.minimum(start_in, s)
    done = np.empty_like(arrival)
    first = work <= left_in_window
    done[first] = (offset + j * k + start_in + work)[first]
    rem = work - left_in_window
    extra_windows = np.ceil(rem / s) - 1
    tail = rem - extra_windows * s
    later = ~first
    done[later] = (offset + (j + 1 + extra_windows) * k + tail)[later]
    return done


def mc_a2s_aoi(win: SatWindow, a_over_D: float, packets: int, rng: np.random.Generator
               ) -> tuple[float, float]:
    """Event-driven per-packet A2S AoI with attribution.

    Packets reach the UAV at uniform random times against a periodic
    service pattern (service ``T^S`` then a gap ``T^W``) and need
    ``a_over_D`` seconds of in-window transmission.  Returns
    ``(mean delay, mean waiting part)``, the waiting part being the time
    spent before the first usable window opens.
    """
    horizon = win.interval * max(packets // 10, 50)
    arrival = rng.uniform(0.0, horizon, packets)
    done = _service_time_needed(arrival, a_over_D, win, 0.0)
    pos = np.mod(arrival, win.interval)
    waiting = np.where(pos < win.service_time, 0.0, win.interval - pos)
    return float((done - arrival).mean()), float(waiting.mean())


def mc_saoi_proportion(n_gts: int, p_sched: float, d_over_D: float, win: SatWindow, a_over_D: float,
                       slots: int, packets: int, rng: np.random.Generator, packet_rate: float = 0.05) -> float:
    """Attribution-tagged S-AoI share: total waiting-tagged AoI over total
    AoI, with the G2A part in slot-seconds from the ledger simulation."""
    g2a = mc_g2a_aoi(n_gts, p_sched, d_over_D, slots, rng, packet_rate)
    delay, waiting = mc_a2s_aoi(win, a_over_D, packets, rng)
    total = g2a + delay
    return waiting / total if total > 0 else 0.0


# --- satellite density search --------------------------------------------------

@dataclass
class SlsdoResult:
    sats: int | None
    bounds: tuple[int, int]
    probes: list = field(default_factory=list)   # (L, measured share)
    feasible: bool = True
    nearest: tuple | None = None


def slsdo_search(oracle, target: tuple[float, float], l_min: int, l_max: int) -> SlsdoResult:
    """Binary search over the satellite count of one orbit.

    ``oracle(L)`` returns the measured S-AoI share, assumed non-increasing in
    L.  A share above the target raises the floor, below it lowers the
    ceiling; the first probe inside the target range is returned.
    """
    lo_t, hi_t = target
    if l_min < 1 or l_max < l_min:
        raise ValueError("need 1 <= l_min <= l_max")
    lo, hi = l_min, l_max
    probes = []
    while lo <= hi:
        mid = (lo + hi) // 2
        d = float(oracle(mid))
        probes.append((mid, d))
        if d > hi_t:
            lo = mid + 1
        elif d < lo_t:
            hi = mid - 1
        else:
            return SlsdoResult(mid, (l_min, l_max), probes)
    return SlsdoResult(None, (l_min, l_max), probes, False, probes[-1] if probes else None)


def required_sats(res: SlsdoResult, upper: float) -> int | None:
    """The returned count, or on infeasibility the smallest probe meeting the upper target."""
    if res.feasible:
        return res.sats
    ok = [L for L, d in res.probes if d <= upper]
    return min(ok) if ok else None


def nominal_a2s_delay(cfg: ScenarioConfig) -> float:
    """Seconds to push one packet over all A2S subchannels at fixed power with
    the satellite at zenith and mean shadowing."""
    from .channel import a2s_budget_db
    g = 10 ** ((a2s_budget_db(cfg.leo_altitude, cfg) + cfg.shadow_mean_db) / 10)
    rate = cfg.a2s_subchannels * cfg.a2s_subchannel_hz * np.log2(1 + g * cfg.fixed_tx_power / cfg.a2s_noise)
    return cfg.packet_bits / rate


def max_probes(l_min: int, l_max: int) -> int:
    return math.ceil(math.log2(l_max - l_min + 1)) + 1


def linear_scan(oracle, target, l_min: int, l_max: int) -> list[int]:
    """Every L in range whose share lies inside the target."""
    return [L for L in range(l_min, l_max + 1) if target[0] <= oracle(L) <= target[1]]


def analytic_saoi_oracle(cfg: ScenarioConfig, e_g2a: float, a_over_D: float):
    def oracle(L: int) -> float:
        return saoi_proportion(e_g2a, sat_window(cfg, L), [a_over_D])
    return oracle


def mc_saoi_oracle(cfg: ScenarioConfig, e_g2a_mc: float, a_over_D: float, seed: int, packets: int = 20_000):
    """Measured share with common random numbers across L (same seed per probe)."""
    from .rng import Purpose, stream

    def oracle(L: int) -> float:
        delay, waiting = mc_a2s_aoi(sat_window(cfg, L), a_over_D, packets, stream(seed, Purpose.PILOT, 7))
        total = e_g2a_mc + delay
        return waiting / total if total > 0 else 0.0
    return oracle


def search_bounds(cfg: ScenarioConfig, e_g2a: float, a_over_D: float, target, margin: int = 2,
                  l_cap: int = 512) -> tuple[int, int]:
    """Bracket for the search from the closed-form share.

    ``L_lo`` is the smallest count whose expected share is at most the upper
    target and ``L_hi`` the largest whose share still reaches the lower
    target; both are widened by ``margin``.
    """
    f = analytic_saoi_oracle(cfg, e_g2a, a_over_D)
    vals = [(L, f(L)) for L in range(1, l_cap + 1)]
    lo = next((L for L, v in vals if v <= target[1]), l_cap)
    hi = max((L for L, v in vals if v >= target[0]), default=lo)
    hi = max(hi, lo)
    return max(1, lo - margin), min(l_cap, hi + margin)


# --- decoupling bound ----------------------------------------------------------

@dataclass
class BoundReport:
    pairs: int
    violations: int
    min_slack: float
    tight_gap: float          # relative gap between f and the bound at (x*, y*)
    v1: float
    v2: float


def decoupling_bound_check(lower: list[tuple[float, float, float]], upper: list[tuple[float, float, float]],
                           beta: float = 1.0, consistent: bool = True) -> BoundReport:
    """Exhaustive check of the two-layer bound on a discretised instance.

    ``lower`` lists ``(D_collected, E, A_G)`` per lower-layer action and
    ``upper`` ``(D_capacity, E_hat, A_U)`` per upper-layer action.  With
    ``consistent`` the upper capacities are rescaled so the two optima carry
    the same volume (the consistency condition); rescaling leaves the
    upper-layer argmax unchanged.
    """
    lo = np.asarray(lower, dtype=float).reshape(-1, 3)
    up = np.asarray(upper, dtype=float).reshape(-1, 3).copy()
    obj1 = lo[:, 0] / (beta * lo[:, 1] * lo[:, 2])
    x_star = int(np.argmax(obj1))
    obj2 = up[:, 0] / (beta * up[:, 1] * up[:, 2])
    y_star = int(np.argmax(obj2))
    if consistent and up[y_star, 0] > 0:
        up[:, 0] *= lo[x_star, 0] / up[y_star, 0]
        obj2 = up[:, 0] / (beta * up[:, 1] * up[:, 2])
    v1, v2 = float(obj1[x_star]), float(obj2[y_star])
    n_viol, min_slack = 0, math.inf
    for (dg, e, ag), (du, eh, au) in itertools.product(lo, up):
        denom = (e + eh) * (ag + au)
        f = min(dg, du) / (beta * denom)
        bound = min(v1 * e * ag / denom, v2 * eh * au / denom)
        slack = bound - f
        min_slack = min(min_slack, slack)
        if slack < -1e-12 * max(abs(bound), 1e-300):
            n_viol += 1
    dg, e, ag = lo[x_star]
    du, eh, au = up[y_star]
    denom = (e + eh) * (ag + au)
    f_star = min(dg, du) / (beta * denom)
    b_star = min(v1 * e * ag / denom, v2 * eh * au / denom)
    gap = abs(b_star - f_star) / b_star if b_star > 0 else 0.0
    return BoundReport(len(lo) * len(up), n_viol, float(min_slack), float(gap), v1, v2)


def tiny_instance(cfg: ScenarioConfig | None = None, n_pos: int = 5, n_pow: int = 5):
    """A 2-GT / 1-UAV / 2-satellite instance built from the channel and energy models.

    Lower-layer actions: ``n_pos`` hover spots times WET on/off.  Upper-layer
    actions: satellite choice times ``n_pow`` power levels.  LoS is forced so
    every quantity is deterministic.
    """
    from .channel import a2s_budget_db, g2a_gains, g2a_sinr
    from .uav import propulsion_power

    cfg = cfg or ScenarioConfig(n_gts=2, n_uavs=1, n_leos=2)
    rng = np.random.default_rng(0)
    gts = np.array([[100.0, 100.0, 0.0], [250.0, 100.0, 0.0]])
    lower = []
    for x in np.linspace(60.0, 300.0, n_pos):
        uav = np.array([[x, 100.0, cfg.alt_min]])
        d = np.linalg.norm(gts - uav, axis=1)
        C = (d <= cfg.cover_range).astype(np.int8)[:, None]
        S = C.copy()
        gains, _ = g2a_gains(gts, uav, rng, cfg, force_los=True)
        sinr = g2a_sinr(S, C, gains, cfg)
        vol = cfg.g2a_subchannel_hz * np.log2(1 + sinr[:, 0]) * cfg.slot_seconds
        # ledger: each GT holds two packets aged 3 and 1; deliveries retire the oldest
        ages = []
        for n in range(2):
            led = PacketLedger([Packet(n, 0, 3), Packet(n, 2, 1)])
            led.deliver(float(min(vol[n], 2 * cfg.packet_bits)), cfg.packet_bits, 10)
            led.age_step()
            ages.append(led.total_age)
        for z in (0, 1):
            e = (S.sum() * cfg.gt_tx_power + S.sum() * cfg.uav_wdc_power + propulsion_power(0.0, cfg)
                 + z * cfg.uav_wet_power) * cfg.slot_seconds
            a_g = max(float(np.mean(ages)) - 0.5 * z, 0.5)  # charging lowers the next-slot AoI pressure
            lower.append((float(vol.sum()), e, a_g))
    upper = []
    for dist in (600e3, 900e3):
        g = 10 ** (a2s_budget_db(dist, cfg) / 10)
        for p in np.linspace(0.2, 1.0, n_pow) * cfg.uav_tx_power_max:
            rate = cfg.a2s_subchannels * cfg.a2s_subchannel_hz * np.log2(1 + g * p / cfg.a2s_noise)
            cap = rate * cfg.slot_seconds
            e_hat = cfg.a2s_subchannels * p * cfg.slot_seconds
            a_u = 1.0 + 4.0 * cfg.packet_bits / cap
            upper.append((float(cap), float(e_hat), float(a_u)))
    return lower, upper


# --- pilot estimation ------------------------------------------------------------

@dataclass
class PilotEstimate:
    slots: int
    q_cover: np.ndarray       # (N, M)
    q_sched: np.ndarray       # (N, M)
    mean_volume: np.ndarray   # (N,) bits per scheduled slot
    e_interval: np.ndarray    # (N,)
    e_g2a: float


def estimate_from_pilot(cfg: ScenarioConfig, l1: str = "is-uav", l2: str = "dmla", seed: int = 0,
                        slots: int = 1000) -> PilotEstimate:
    """Coverage and scheduling frequencies from back-to-back pilot episodes.

    ``q_cover`` counts slots with GT n inside UAV m's coverage (only slots in
    transmit mode when ``cfg.qc_conditioned``); ``q_sched`` averages the
    rank-ratio probability over covered slots.
    """
    from .policies import make_l1, make_l2
    from .sim import Simulator

    n, m = cfg.n_gts, cfg.n_uavs
    cover = np.zeros((n, m))
    eligible = np.zeros(n)
    qs_sum = np.zeros((n, m))
    qs_cnt = np.zeros((n, m))
    vol_sum, vol_cnt = np.zeros(n), np.zeros(n)
    done, run = 0, 0
    while done < slots:
        sim = Simulator(cfg, seed + run, make_l1(l1), make_l2(l2))
        run += 1
        while not sim.done and done < slots:
            w = sim.world
            C = w.refresh_connectivity().C.astype(bool)
            modes = w.gt_array("mode")
            prio = w.gt_array("priority")
            use = modes == 0 if cfg.qc_conditioned else np.ones(n, dtype=bool)
            eligible += use
            cover += C * use[:, None]
            for j in range(m):
                members = np.flatnonzero(C[:, j])
                for i in members:
                    qs_sum[i, j] += scheduling_probability(prio[members], int(np.flatnonzero(members == i)[0]),
                                                           cfg.g2a_subchannels)
                    qs_cnt[i, j] += 1
            gen_before = np.array([g.cum_bits for g in w.gts])
            res = sim.step()
            sent = np.array([g.cum_bits for g in sim.world.gts]) - gen_before
            sched = sim.world.S.sum(axis=1) > 0
            vol_sum[sched] += sent[sched]
            vol_cnt[sched] += 1
            done += 1
            del res
    q_cover = cover / np.maximum(eligible, 1)[:, None]
    q_sched = np.divide(qs_sum, qs_cnt, out=np.zeros_like(qs_sum), where=qs_cnt > 0)
    vol = np.divide(vol_sum, vol_cnt, out=np.zeros_like(vol_sum), where=vol_cnt > 0)
    e_t = np.array([expected_interval(q_cover[i], q_sched[i]) for i in range(n)])
    finite = np.isfinite(e_t)
    e_g = expected_g2a_aoi(np.full(finite.sum(), cfg.packet_bits), vol[finite], e_t[finite]) if finite.any() \
        else NEVER_SCHEDULED
    return PilotEstimate(done, q_cover, q_sched, vol, e_t, e_g)
