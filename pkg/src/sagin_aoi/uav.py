"""UAV energy, data buffering and the A2S transmit step."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .errors import ConstraintViolation
from .ground import Packet, PacketLedger


@dataclass
class Uav:
    index: int
    position: np.ndarray
    battery: float
    harvest_batt: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wet: int = 0
    collect: int = 1
    ledger: PacketLedger = field(default_factory=PacketLedger)
    harvested: float = 0.0     # solar energy of the current slot (J)
    received_bits: float = 0.0  # cumulative raw G2A bits

    @property
    def aoi(self) -> int:
        return self.ledger.total_age

    def buffer_bits(self, packet_bits: float) -> float:
        """Bits held for forwarding (complete packets minus partial A2S credit)."""
        return max(len(self.ledger) * packet_bits - self.ledger.progress, 0.0)


def propulsion_power(speed: float, cfg: ScenarioConfig) -> float:
    """Rotary-wing propulsion power (W) at horizontal speed ``speed`` (m/s)."""
    if speed < 0:
        raise ValueError("speed must be non-negative")
    v2 = speed * speed
    v0 = cfg.prop_induced_velocity
    blade = cfg.prop_profile_w * (1.0 + 3.0 * v2 / cfg.prop_tip_speed ** 2)
    induced = cfg.prop_induced_w * math.sqrt(math.sqrt(1.0 + v2 * v2 / (4.0 * v0 ** 4)) - v2 / (2.0 * v0 ** 2))
    parasite = 0.5 * cfg.prop_fuselage_drag * cfg.air_density * cfg.rotor_solidity * cfg.rotor_disc_area * speed ** 3
    return blade + induced + parasite


def max_propulsion_power(cfg: ScenarioConfig, n_grid: int = 301) -> float:
    return max(propulsion_power(v, cfg) for v in np.linspace(0.0, cfg.v_max, n_grid))


def max_slot_energy(cfg: ScenarioConfig) -> float:
    """Worst-case replaceable-battery draw in one slot."""
    return (cfg.g2a_subchannels * cfg.uav_wdc_power + max_propulsion_power(cfg) + cfg.uav_wet_power) * cfg.slot_seconds


def consumed_energy(n_scheduled: int, speed: float, wet: int, cfg: ScenarioConfig) -> float:
    return (n_scheduled * cfg.uav_wdc_power + propulsion_power(speed, cfg) + wet * cfg.uav_wet_power) * cfg.slot_seconds


def draw_solar(rng: np.random.Generator, cfg: ScenarioConfig, size=None):
    return rng.uniform(0.0, cfg.solar_frac_cap * cfg.uav_harvest_cap, size)


def uav_energy_step(battery: float, harvest_batt: float, consumed: float, solar: float,
                    a2s_energy: float, cfg: ScenarioConfig) -> tuple[float, float]:
    """Next-slot (replaceable battery, harvest board).

    The replaceable battery pays flight, WDC and WET and never drops below 0.
    The harvest board gains the slot's solar energy, pays only the A2S
    transmission and is capped at its capacity.
    """
    b = max(battery - consumed, 0.0)
    hb = min(max(harvest_batt + solar - a2s_energy, 0.0), cfg.uav_harvest_cap)
    return b, hb


def collect_and_buffer(uav: Uav, retired: list[Packet], bits: float, slot: int) -> None:
    """Hand GT packets completed this slot to the UAV.

    Packets keep their ages and only become forwardable in the next slot.
    """
    uav.received_bits += bits
    moved = [Packet(p.owner, p.gen_slot, p.age, slot + 1) for p in retired]
    uav.ledger.push(moved)


@dataclass
class A2sResult:
    throughput: float   # delivered bits
    capacity: float     # bits the link could carry in tau_hat
    energy: float       # J drawn from the harvest board
    tau_hat: float      # s
    retired: list


def a2s_transmit(uav: Uav, sinr: float, power: float, rho: float, time_share: float, slot: int,
                 cfg: ScenarioConfig, outage: bool = False) -> A2sResult:
    """Forward buffered packets to the assigned satellite.

    ``power`` is per subchannel, ``rho`` the fraction of the ``Y^S`` subchannels
    and ``time_share`` the usable fraction of the slot.  The active time is the
    smallest of the slot share, the energy the harvest board can pay and the
    time needed to empty the forwardable buffer.  A link in outage spends the
    energy but delivers nothing.
    """
    if not (0.0 < power <= cfg.uav_tx_power_max * (1 + 1e-12)):
        raise ConstraintViolation("C10", f"UAV {uav.index} power {power!r} outside (0, P_max]")
    if not (0.0 <= rho <= 1.0 + 1e-12):
        raise ConstraintViolation("C9", f"UAV {uav.index} subchannel ratio {rho!r} outside [0, 1]")
    backlog = uav.ledger.backlog_bits(slot, cfg.packet_bits)
    if backlog <= 0.0 or rho <= 0.0 or time_share <= 0.0:
        return A2sResult(0.0, 0.0, 0.0, 0.0, [])
    radiated = rho * cfg.a2s_subchannels * power
    denom = radiated if cfg.tau_hat_mode == "total" else power
    t_energy = (uav.harvest_batt + uav.harvested) / denom
    rate = cfg.a2s_subchannels * cfg.a2s_subchannel_hz * rho * math.log2(1.0 + sinr)
    t_clear = backlog / rate if rate > 0 else math.inf
    tau_hat = max(min(t_energy, cfg.slot_seconds * time_share, t_clear), 0.0)
    capacity = rate * tau_hat
    energy = radiated * tau_hat
    if outage:
        return A2sResult(0.0, capacity, energy, tau_hat, [])
    sent = min(backlog, capacity)
    retired = uav.ledger.deliver(sent, cfg.packet_bits, slot)
    return A2sResult(sent, capacity, energy, tau_hat, retired)
