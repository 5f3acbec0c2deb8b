"""Ground terminals: packet-level AoI, mode switching, harvesting, priority."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import pairwise_distance
from .config import ScenarioConfig

T_GT = 0  # transmit mode
E_GT = 1  # energy-harvest mode

_BIT_EPS = 1e-6


@dataclass
class Packet:
    owner: int
    gen_slot: int
    age: int = 0
    ready_slot: int = 0     # first slot in which the current holder may forward it
    delivered: bool = False


@dataclass
class PacketLedger:
    """FIFO of undelivered packets with partial-transmission credit on the head.

    A packet retires only once all of its bits have gone through; surplus bits
    stay as credit toward the next packet in line.
    """

    packets: list = field(default_factory=list)
    progress: float = 0.0

    def __len__(self) -> int:
        return len(self.packets)

    @property
    def total_age(self) -> int:
        return sum(p.age for p in self.packets)

    def ages(self) -> list[int]:
        return [p.age for p in self.packets]

    def eligible(self, slot: int) -> int:
        k = 0
        for p in self.packets:
            if p.ready_slot > slot:
                break
            k += 1
        return k

    def backlog_bits(self, slot: int, packet_bits: float) -> float:
        return max(self.eligible(slot) * packet_bits - self.progress, 0.0)

    def push(self, packets) -> None:
        self.packets.extend(packets)

    def deliver(self, bits: float, packet_bits: float, slot: int) -> list[Packet]:
        """Apply ``bits`` of transmission; return the packets that completed."""
        if bits < 0:
            raise ValueError("delivered bits must be non-negative")
        n_ready = self.eligible(slot)
        if n_ready == 0:
            return []
        self.progress += bits
        done = 0
        while done < n_ready and self.progress >= packet_bits - _BIT_EPS:
            self.progress -= packet_bits
            done += 1
        if done == n_ready or self.progress < 0:
            self.progress = max(self.progress, 0.0) if done < n_ready else 0.0
        retired, self.packets = self.packets[:done], self.packets[done:]
        for p in retired:
            p.delivered = True
        return retired

    def age_step(self) -> None:
        for p in self.packets:
            p.age += 1


@dataclass
class GroundTerminal:
    index: int
    position: np.ndarray
    battery: float
    mode: int = T_GT
    ledger: PacketLedger = field(default_factory=PacketLedger)
    cum_bits: float = 0.0
    priority: float = 0.0
    generated: int = 0

    @property
    def aoi(self) -> int:
        return self.ledger.total_age


def step_packets_aoi(gt: GroundTerminal, delivered_bits: float, slot: int, cfg: ScenarioConfig,
                     rng: np.random.Generator) -> tuple[list[Packet], int]:
    """One slot of the GT packet ledger.

    Order: the slot's transmission retires backlog packets oldest first, then
    Poisson(lambda) new packets are generated, then every undelivered packet
    ages by one slot.  Returns the retired packets and the GT's summed AoI.
    """
    retired = gt.ledger.deliver(delivered_bits, cfg.packet_bits, slot)
    k = int(rng.poisson(cfg.packet_rate))
    gt.ledger.push(Packet(gt.index, slot, 0, slot + 1) for _ in range(k))
    gt.generated += k
    gt.ledger.age_step()
    return retired, gt.aoi


def local_average_aoi(positions: np.ndarray, aoi: np.ndarray, sense_range: float) -> np.ndarray:
    """Mean AoI over the GTs within ``sense_range`` of each GT (itself included)."""
    near = pairwise_distance(positions, positions) <= sense_range
    aoi = np.asarray(aoi, dtype=float)
    return (near * aoi[None, :]).sum(axis=1) / near.sum(axis=1)


def aftu_update(battery, aoi, local_avg, prev_mode, cfg: ScenarioConfig) -> np.ndarray:
    """Four-threshold mode rule.

    Battery at or above B_T forces transmit mode and at or below B_E forces
    harvest mode.  Inside the band, AoI at or above ``(1+xi)*avg`` forces
    transmit, at or below ``(1-xi)*avg`` forces harvest, otherwise the mode is
    held.  When both AoI branches fire (``avg == aoi == 0``) transmit wins.
    """
    b = np.asarray(battery, dtype=float)
    a = np.asarray(aoi, dtype=float)
    avg = np.asarray(local_avg, dtype=float)
    xi = cfg.aftu_weight
    mode = np.asarray(prev_mode, dtype=np.int8).copy()
    band = (b > cfg.batt_thresh_e) & (b < cfg.batt_thresh_t)
    to_e = band & (a <= (1.0 - xi) * avg)
    to_t = band & (a >= (1.0 + xi) * avg)
    mode[to_e] = E_GT
    mode[to_t] = T_GT
    mode[b <= cfg.batt_thresh_e] = E_GT
    mode[b >= cfg.batt_thresh_t] = T_GT
    return mode


def eh_curve(p_rf, cfg: ScenarioConfig):
    """Non-linear RF-to-DC conversion.

    Zero up to the sensitivity level, then a logistic rise normalised to be
    continuous at the sensitivity and to saturate at ``eh_saturation``.
    """
    p = np.asarray(p_rf, dtype=float)
    a, b = cfg.eh_steepness, cfg.eh_midpoint
    psi = 1.0 / (1.0 + np.exp(-a * (p - b)))
    psi0 = 1.0 / (1.0 + math.exp(-a * (cfg.eh_sensitivity - b)))
    out = cfg.eh_saturation * (psi - psi0) / (1.0 - psi0)
    out = np.where(p > cfg.eh_sensitivity, out, 0.0)
    return float(out) if out.ndim == 0 else out


def received_rf_power(wet_flags, gains, C, cfg: ScenarioConfig) -> np.ndarray:
    """RF power (W) reaching every GT from the UAVs currently radiating energy."""
    lin = 10.0 ** (cfg.wet_link_gain_db / 10.0)
    contrib = cfg.uav_wet_power * np.asarray(wet_flags, dtype=float)[None, :] * gains * lin
    if cfg.eh_gate_by_coverage:
        contrib = contrib * np.asarray(C)
    return contrib.sum(axis=1)


def harvest_and_battery(battery, mode, wet_flags, gains, S, C, cfg: ScenarioConfig):
    """Harvested energy, consumed energy and next-slot battery for every GT.

    Returns ``(new_battery, harvested, consumed, rf_power)``.
    """
    battery = np.asarray(battery, dtype=float)
    mode = np.asarray(mode)
    p_rf = received_rf_power(wet_flags, gains, C, cfg)
    harvested = mode * np.asarray(eh_curve(p_rf, cfg)) * cfg.slot_seconds
    consumed = np.asarray(S).sum(axis=1) * cfg.gt_tx_power * cfg.slot_seconds
    new = np.minimum(battery + harvested - consumed, cfg.gt_batt_cap)
    return np.maximum(new, 0.0), harvested, consumed, p_rf


def jain_index(x) -> float:
    """Jain's fairness index; an all-zero vector counts as perfectly fair."""
    x = np.asarray(x, dtype=float)
    sq = float((x * x).sum())
    if sq == 0.0:
        return 1.0
    return float(x.sum() ** 2 / (len(x) * sq))


def nearest_covering_uav(dist_gu: np.ndarray, C: np.ndarray, allowed=None) -> np.ndarray:
    """Index of the nearest covering UAV per GT (-1 if none); ties go to the lower index."""
    mask = np.asarray(C) > 0
    if allowed is not None:
        mask = mask & (np.asarray(allowed, dtype=bool)[None, :])
    d = np.where(mask, dist_gu, np.inf)
    idx = np.argmin(d, axis=1)
    return np.where(np.isfinite(d[np.arange(len(d)), idx]), idx, -1)


def priority_and_fairness(aoi, cum_bits, C, mode, request_uav, cfg: ScenarioConfig):
    """AoI-fairness priority of each GT for the next slot plus Jain's index.

    The fairness denominator of a GT is the cumulative volume of the
    transmit-mode GTs covered by the UAV it would request.  Zero denominators
    make the corresponding term zero.
    """
    aoi = np.asarray(aoi, dtype=float)
    cum = np.asarray(cum_bits, dtype=float)
    n = len(aoi)
    kappa = cfg.aoi_fairness_kappa
    mean_aoi = aoi.mean() if n else 0.0
    aoi_term = kappa * aoi / mean_aoi if mean_aoi > 0 else np.zeros(n)
    per_uav = (np.asarray(C) * (cum * (1 - np.asarray(mode)))[:, None]).sum(axis=0)
    fair_term = np.zeros(n)
    for i, m in enumerate(np.asarray(request_uav)):
        if m >= 0 and per_uav[m] > 0:
            fair_term[i] = (1.0 - kappa) * n * cum[i] / per_uav[m]
    return aoi_term - fair_term, jain_index(cum)
