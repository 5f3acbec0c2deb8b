"""Scenario configuration: parameters, unit conversion, file round-trip.

Every physical constant shared between modules lives on :class:`ScenarioConfig`.
Power-like fields are held in watts in memory and written in dBm on disk.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ScenarioConfig",
    "ScenarioError",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "config_hash",
    "POWER_FIELDS",
]


class ScenarioError(ValueError):
    """Raised when a scenario file is malformed or violates an invariant."""


def dbm_to_watt(p):
    """Convert dBm to watts (``0 dBm -> 1e-3 W``). Works on scalars and arrays."""
    if np.ndim(p) == 0:
        return 10.0 ** (float(p) / 10.0) * 1e-3
    return 10.0 ** (np.asarray(p, dtype=float) / 10.0) * 1e-3


def watt_to_dbm(w):
    if np.ndim(w) == 0:
        return 10.0 * math.log10(float(w) / 1e-3)
    return 10.0 * np.log10(np.asarray(w, dtype=float) / 1e-3)


def db_to_linear(x):
    if np.ndim(x) == 0:
        return 10.0 ** (float(x) / 10.0)
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


# fields stored in watts in memory, dBm (dBm/Hz for the noise PSD) on disk
POWER_FIELDS = (
    "noise_psd",
    "gt_tx_power",
    "uav_wet_power",
    "uav_wdc_power",
    "uav_tx_power_max",
    "fixed_tx_power",
    "min_tx_power",
    "eh_sensitivity",
    "eh_saturation",
)


@dataclass(frozen=True)
class ScenarioConfig:
    # population
    n_gts: int = 9
    n_uavs: int = 4
    n_leos: int = 4
    sats_per_leo: int = 22
    n_areas: int = 1
    area_side: float = 1500.0
    # time
    slot_seconds: float = 1.0
    episode_slots: int = 200
    # spectrum
    g2a_subchannels: int = 2
    a2s_subchannels: int = 10
    g2a_subchannel_hz: float = 1e6
    a2s_subchannel_hz: float = 1e6
    noise_psd: float = dbm_to_watt(-174.0)
    # powers (W)
    gt_tx_power: float = dbm_to_watt(10.0)
    uav_wet_power: float = dbm_to_watt(30.0)
    uav_wdc_power: float = dbm_to_watt(10.0)
    uav_tx_power_max: float = dbm_to_watt(30.0)
    fixed_tx_power: float = dbm_to_watt(30.0)
    min_tx_power: float = dbm_to_watt(-30.0)
    # energy (J)
    batt_thresh_e: float = 0.01
    batt_thresh_t: float = 0.5
    gt_batt_cap: float = 1.0
    gt_batt_init_range: tuple[float, float] = (0.0, 1.0)
    uav_batt_cap: float = 2000.0
    uav_harvest_cap: float = 10.0
    uav_batt_min: float = 50.0
    solar_frac_cap: float = 0.8
    # coefficients
    aftu_weight: float = 0.1
    aoi_fairness_kappa: float = 0.5
    reward_zeta1: float = 1.0
    reward_zeta2: float = 1.0
    scale_beta: float = 1.0
    # ranges (m, m/s)
    sense_range_gt: float = 400.0
    sense_range_uav: float = 400.0
    cover_range: float = 200.0
    v_max: float = 30.0
    alt_min: float = 60.0
    alt_max: float = 120.0
    d_min: float = 10.0
    # constellation
    earth_radius: float = 6371e3
    leo_altitude: float = 550e3
    sat_speed: float = 7590.0
    min_elevation: float = math.radians(10.0)
    carrier_hz: float = 20e9
    gt_figure_of_merit_db: float = 34.0
    rain_margin_db: float = 8.0
    boltzmann: float = 1.38e-23
    shadow_mean_db: float = -2.6
    shadow_var_db: float = 1.63
    # traffic
    packet_rate: float = 0.5
    packet_bits: float = 1e6
    min_sat_rate: float = 1e6
    # channel models
    los_params: tuple[float, float, float, float] = (3.0, 5.0, 12.08, 0.11)
    wet_link_gain_db: float = 30.0
    eh_sensitivity: float = dbm_to_watt(-10.0)
    eh_saturation: float = dbm_to_watt(7.0)
    eh_steepness: float = 2000.0
    eh_midpoint: float = 2e-3
    # rotary-wing propulsion
    prop_profile_w: float = 79.86
    prop_induced_w: float = 88.63
    prop_tip_speed: float = 120.0
    prop_induced_velocity: float = 4.03
    prop_fuselage_drag: float = 0.6
    air_density: float = 1.225
    rotor_solidity: float = 0.05
    rotor_disc_area: float = 0.503
    # analytics / search
    saoi_target_range: tuple[float, float] = (0.05, 0.10)
    qc_conditioned: bool = False
    # modelling switches
    tau_hat_mode: str = "total"
    pd_switch_grid: int = 10
    eh_gate_by_coverage: bool = True

    def __post_init__(self):
        for name in ("gt_batt_init_range", "los_params", "saoi_target_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    # derived quantities -------------------------------------------------
    @property
    def area_width(self) -> float:
        return self.area_side * self.n_areas

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.leo_altitude

    @property
    def g2a_noise(self) -> float:
        return self.noise_psd * self.g2a_subchannel_hz

    @property
    def a2s_noise(self) -> float:
        return self.noise_psd * self.a2s_subchannel_hz

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        counts = ("n_gts", "n_uavs", "n_leos", "sats_per_leo", "n_areas", "episode_slots",
                  "g2a_subchannels", "a2s_subchannels")
        for name in counts:
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ScenarioError(f"{name} must be a positive integer, got {v!r}")
        positive = ("area_side", "slot_seconds", "g2a_subchannel_hz", "a2s_subchannel_hz", "noise_psd",
                    "gt_tx_power", "uav_wet_power", "uav_wdc_power", "uav_tx_power_max", "fixed_tx_power",
                    "min_tx_power", "batt_thresh_e", "batt_thresh_t", "gt_batt_cap", "uav_batt_cap",
                    "uav_harvest_cap", "scale_beta", "sense_range_gt", "sense_range_uav", "cover_range",
                    "v_max", "alt_min", "alt_max", "d_min", "earth_radius", "leo_altitude", "sat_speed",
                    "carrier_hz", "boltzmann", "packet_bits", "min_sat_rate", "eh_sensitivity",
                    "eh_saturation", "eh_steepness", "eh_midpoint")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ScenarioError(f"{name} must be strictly positive, got {v!r}")
        # non-strict: the default powers give P^G*tau == B_E exactly, and a
        # transmit-mode GT always holds B > B_E, so equality is still safe
        if not self.gt_tx_power * self.slot_seconds <= self.batt_thresh_e * (1 + 1e-12):
            raise ScenarioError("P^G*tau <= B_E violated")
        if not self.batt_thresh_e < self.batt_thresh_t:
            raise ScenarioError("B_E < B_T violated")
        if not self.batt_thresh_t <= self.gt_batt_cap:
            raise ScenarioError("B_T <= B_max^G violated")
        if not self.cover_range < self.sense_range_gt:
            raise ScenarioError("O_C^U < O_S^G violated")
        if not self.alt_min <= self.alt_max:
            raise ScenarioError("z_min <= z_max violated")
        if not self.min_tx_power < self.uav_tx_power_max:
            raise ScenarioError("min_tx_power < P_max^U violated")
        if not self.fixed_tx_power <= self.uav_tx_power_max:
            raise ScenarioError("fixed_tx_power <= P_max^U violated")
        lo, hi = self.saoi_target_range
        if not 0.0 < lo <= hi < 1.0:
            raise ScenarioError("0 < saoi_min <= saoi_max < 1 violated")
        g_lo, g_hi = self.gt_batt_init_range
        if not 0.0 <= g_lo <= g_hi <= 1.0:
            raise ScenarioError("0 <= gt_batt_init_range <= 1 violated")
        for name in ("aftu_weight", "aoi_fairness_kappa", "solar_frac_cap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ScenarioError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("reward_zeta1", "reward_zeta2", "packet_rate", "uav_batt_min"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be non-negative")
        if not 0.0 <= self.min_elevation < math.pi / 2:
            raise ScenarioError("min_elevation must lie in [0, pi/2)")
        if self.shadow_var_db < 0:
            raise ScenarioError("shadow_var_db must be non-negative")
        if self.tau_hat_mode not in ("total", "printed"):
            raise ScenarioError(f"tau_hat_mode must be 'total' or 'printed', got {self.tau_hat_mode!r}")
        if len(self.los_params) != 4:
            raise ScenarioError("los_params needs (alpha_L, alpha_N, a, b)")
        if self.pd_switch_grid < 1:
            raise ScenarioError("pd_switch_grid must be >= 1")


# --- file round trip ---------------------------------------------------------

_FIELD_TYPES = {f.name: f for f in fields(ScenarioConfig)}


def _dbm_for_file(w: float) -> float:
    """dBm value that maps back to exactly ``w`` watts (nudged by a few ulps if needed)."""
    d = watt_to_dbm(w)
    up = down = d
    for _ in range(64):
        if dbm_to_watt(up) == w:
            return up
        if dbm_to_watt(down) == w:
            return down
        up = float(np.nextafter(up, math.inf))
        down = float(np.nextafter(down, -math.inf))
    return d


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in POWER_FIELDS:
            v = _dbm_for_file(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def scenario_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        default = _FIELD_TYPES[key].default
        try:
            if key in POWER_FIELDS:
                value = dbm_to_watt(float(value))
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(default, int):
                if isinstance(value, bool) or float(value) != int(value):
                    raise TypeError
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            elif isinstance(default, tuple):
                value = tuple(float(v) for v in value)
                if len(value) != len(default):
                    raise TypeError
            elif isinstance(default, str):
                value = str(value)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad value for {key}: {value!r}") from exc
        kwargs[key] = value
    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    """Read a JSON scenario file; missing keys take the defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return scenario_from_dict(data)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(scenario_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
