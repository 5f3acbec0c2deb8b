"""Link geometry and channel models for the ground-to-air and air-to-space hops.

G2A links use a sigmoid line-of-sight probability with separate LoS / NLoS
path-loss exponents and unit reference gain at 1 m.  A2S links use a fixed
Ka-band link budget (free-space loss, receiver G/T, rain margin) plus
log-normal shadowing.  Uplink SINR of both hops follows the interference
structure used by the scheduler: co-covered G2A transmitters interfere, and
NOMA users on one satellite are decoded in descending gain order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig, db_to_linear
from .errors import ConstraintViolation, GeometryError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class ConnectivityMatrices:
    G: np.ndarray  # (N, M) GT sensed by UAV
    U: np.ndarray  # (M, M) UAV sensed by UAV, zero diagonal
    C: np.ndarray  # (N, M) GT inside UAV coverage
    dist_gu: np.ndarray
    dist_uu: np.ndarray


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def sense_and_cover(gt_pos: np.ndarray, uav_pos: np.ndarray, cfg: ScenarioConfig) -> ConnectivityMatrices:
    """Threshold the GT-UAV and UAV-UAV distances; bounds are inclusive."""
    d_gu = pairwise_distance(gt_pos, uav_pos)
    d_uu = pairwise_distance(uav_pos, uav_pos)
    G = (d_gu <= cfg.sense_range_gt).astype(np.int8)
    C = (d_gu <= cfg.cover_range).astype(np.int8)
    U = (d_uu <= cfg.sense_range_uav).astype(np.int8)
    np.fill_diagonal(U, 0)
    return ConnectivityMatrices(G=G, U=U, C=C, dist_gu=d_gu, dist_uu=d_uu)


# --- ground to air -------------------------------------------------------------

def los_probability(elevation_deg, a: float, b: float):
    """Sigmoid air-to-ground LoS probability for elevation angle in degrees."""
    return 1.0 / (1.0 + a * np.exp(-b * (np.asarray(elevation_deg, dtype=float) - a)))


def elevation_deg(gt_pos, uav_pos) -> np.ndarray:
    d = pairwise_distance(gt_pos, uav_pos)
    dz = np.asarray(uav_pos, dtype=float)[None, :, 2] - np.atleast_2d(gt_pos)[:, None, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.degrees(np.arcsin(np.clip(dz / d, -1.0, 1.0)))


def g2a_gains(gt_pos: np.ndarray, uav_pos: np.ndarray, rng: np.random.Generator,
              cfg: ScenarioConfig, force_los: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw the (N, M) G2A power gains and LoS indicators.

    ``force_los`` pins every link to LoS (True) or NLoS (False); the uniform
    draws are consumed either way so the stream stays aligned.
    """
    alpha_l, alpha_n, a, b = cfg.los_params
    d = pairwise_distance(gt_pos, uav_pos)
    if np.any(d <= 0.0):
        raise GeometryError("zero GT-UAV distance")
    u = rng.random(d.shape)
    if force_los is None:
        los = u < los_probability(elevation_deg(gt_pos, uav_pos), a, b)
    else:
        los = np.full(d.shape, bool(force_los))
    alpha = np.where(los, alpha_l, alpha_n)
    return d ** (-alpha), los


def g2a_gain(gt_pos, uav_pos, rng: np.random.Generator, cfg: ScenarioConfig,
             force_los: bool | None = None) -> float:
    g, _ = g2a_gains(np.atleast_2d(gt_pos), np.atleast_2d(uav_pos), rng, cfg, force_los)
    return float(g[0, 0])


def g2a_sinr(S: np.ndarray, C: np.ndarray, gains: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """Uplink SINR of every (GT, UAV) pair.

    Interference at UAV m sums every other scheduled GT inside m's coverage,
    whichever UAV it is scheduled to.
    """
    S = np.asarray(S)
    C = np.asarray(C)
    if np.any((S > 0) & (C == 0)):
        n, m = np.argwhere((S > 0) & (C == 0))[0]
        raise ConstraintViolation("C8", f"GT {n} scheduled to UAV {m} outside coverage")
    p = cfg.gt_tx_power
    transmitting = S.sum(axis=1) > 0                       # (N,)
    rx = C * transmitting[:, None] * gains * p             # (N, M) power arriving from covered transmitters
    total = rx.sum(axis=0)                                 # (M,)
    interference = total[None, :] - rx
    signal = S * gains * p
    return signal / (interference + cfg.g2a_noise)


def g2a_volumes(S: np.ndarray, sinr: np.ndarray, cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bits per slot: per GT (sum over UAVs) and per UAV (sum over its scheduled GTs)."""
    per_link = np.asarray(S) * cfg.g2a_subchannel_hz * np.log2(1.0 + sinr) * cfg.slot_seconds
    return per_link.sum(axis=1), per_link.sum(axis=0)


# --- air to space --------------------------------------------------------------

def slant_geometry(uav_ecef: np.ndarray, sat_ecef: np.ndarray) -> tuple[float, float]:
    """Slant range (m) and elevation (rad) of a satellite seen from a UAV.

    Both points are in the Earth-centred frame; the local vertical is the
    radial direction through the UAV.
    """
    uav_ecef = np.asarray(uav_ecef, dtype=float)
    los = np.asarray(sat_ecef, dtype=float) - uav_ecef
    rng_m = float(np.linalg.norm(los))
    if rng_m <= 0.0:
        raise GeometryError("zero UAV-satellite distance")
    up = uav_ecef / np.linalg.norm(uav_ecef)
    return rng_m, math.asin(max(-1.0, min(1.0, float(los @ up) / rng_m)))


def free_space_loss_db(distance_m: float, carrier_hz: float) -> float:
    return 20.0 * math.log10(4.0 * math.pi * distance_m * carrier_hz / SPEED_OF_LIGHT)


def a2s_budget_db(distance_m: float, cfg: ScenarioConfig) -> float:
    """Deterministic part of the A2S gain in dB (no shadowing).

    The receiver's G/T is turned into an equivalent power gain against the
    noise floor ``N_0 = k T_0`` used by the SINR expression.
    """
    gt_gain_db = cfg.gt_figure_of_merit_db + 10.0 * math.log10(cfg.noise_psd / cfg.boltzmann)
    return -free_space_loss_db(distance_m, cfg.carrier_hz) + gt_gain_db - cfg.rain_margin_db


def draw_shadowing_db(rng: np.random.Generator, cfg: ScenarioConfig, size=None):
    return rng.normal(cfg.shadow_mean_db, math.sqrt(cfg.shadow_var_db), size)


def a2s_gain(uav_ecef, sat_ecef, rng: np.random.Generator | None, cfg: ScenarioConfig,
             shadowing: bool = True, enforce_mask: bool = True) -> float:
    """Linear A2S power gain; raises if the satellite is below the elevation mask."""
    d, elev = slant_geometry(uav_ecef, sat_ecef)
    if enforce_mask and elev < cfg.min_elevation - 1e-12:
        raise GeometryError(f"satellite at elevation {math.degrees(elev):.2f} deg below mask")
    gain_db = a2s_budget_db(d, cfg)
    if shadowing:
        gain_db += float(draw_shadowing_db(rng, cfg))
    return db_to_linear(gain_db)


def sic_order(gains) -> np.ndarray:
    """Decode order: descending gain, ties by ascending index."""
    gains = np.asarray(gains, dtype=float)
    return np.lexsort((np.arange(len(gains)), -gains))


def noma_sinr(gains, powers, outage, noise: float, p_max: float | None = None) -> np.ndarray:
    """Per-user SINR on one satellite for users already in decode order.

    User ``m`` sees every weaker user (``j > m``) as noise; the stronger users
    (``i < m``) only interfere when ``m``'s own outage flag is raised, i.e.
    SIC of the stronger signals failed.
    """
    gains = np.asarray(gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    outage = np.asarray(outage, dtype=float)
    if np.any(np.diff(gains) > 0):
        raise ValueError("gains must be sorted in descending (decode) order")
    if np.any(powers <= 0) or (p_max is not None and np.any(powers > p_max * (1 + 1e-12))):
        raise ConstraintViolation("C10", "transmit power outside (0, P_max]")
    rx = gains * powers
    weaker = np.cumsum(rx[::-1])[::-1] - rx                # sum over j > m
    stronger = np.cumsum(rx) - rx                          # sum over i < m
    return rx / (weaker + outage * stronger + noise)


def noma_sinr_any_order(gains, powers, outage, noise: float, p_max: float | None = None) -> np.ndarray:
    """:func:`noma_sinr` for users in arbitrary order; results come back in input order."""
    order = sic_order(gains)
    out = np.empty(len(order))
    out[order] = noma_sinr(np.asarray(gains, float)[order], np.asarray(powers, float)[order],
                           np.asarray(outage, float)[order], noise, p_max)
    return out


def link_rate(sinr, bandwidth_hz: float):
    """Achieved per-subchannel rate in bit/s."""
    return bandwidth_hz * np.log2(1.0 + np.asarray(sinr, dtype=float))


def update_outage(rates, min_rate: float, active=None) -> np.ndarray:
    """Outage flag per link: 0 when the rate reaches the decode threshold."""
    o = (np.asarray(rates, dtype=float) < min_rate).astype(np.int8)
    if active is not None:
        o = o * (np.asarray(active) > 0)
    return o


class OutageCounter:
    """Running ratio of outage signals to total signals."""

    def __init__(self):
        self.outages = 0
        self.signals = 0

    def add(self, outage, active) -> None:
        active = np.asarray(active) > 0
        self.signals += int(active.sum())
        self.outages += int((np.asarray(outage) > 0)[active].sum())

    @property
    def frequency(self) -> float:
        return self.outages / self.signals if self.signals else 0.0
