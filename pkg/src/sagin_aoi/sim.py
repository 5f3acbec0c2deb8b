"""Episode loop, metrics, sweeps and file output."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (OutageCounter, a2s_budget_db, draw_shadowing_db, g2a_gains, g2a_sinr, link_rate,
                      noma_sinr_any_order, slant_geometry, update_outage)
from .config import ScenarioConfig, config_hash, db_to_linear, scenario_to_dict
from .constellation import area_to_ecef
from .errors import ConstraintViolation
from .feasibility import (ActionL1, ActionL2, ProjectionLog, SlotSnapshot, check_feasible, project_l2,
                          project_motion, violations)
from .ground import (aftu_update, harvest_and_battery, jain_index, local_average_aoi, nearest_covering_uav,
                     priority_and_fairness, step_packets_aoi)
from .policies import (L1Policy, L2Policy, PdUav, build_state, gt_uav_scheduling, make_l1, make_l2,
                       reward_l2, rewards_l1)
from .rng import Purpose, stream
from .uav import a2s_transmit, collect_and_buffer, consumed_energy, draw_solar, max_slot_energy, uav_energy_step
from .world import WorldState, init_world

SLOT_COLUMNS = (
    "run", "seed", "l1", "l2", "t", "A_G", "A_U", "D_G", "D_U", "D_hat_U", "E", "E_hat", "F",
    "outage_freq", "ete_g2a", "ete_a2s", "ste_g2a", "ste_a2s", "saoi_wait", "saoi_total",
    "objective_gp", "objective_l1", "objective_l2", "reward_l1", "reward_l2", "n_scheduled", "n_wet",
    "sats_in_service", "violations",
)
AGG_COLUMNS = (
    "run", "seed", "l1", "l2", "slots", "A_G", "A_U", "D_G", "D_U", "D_hat_U", "E", "E_hat", "F",
    "outage_freq", "ete_g2a", "ete_a2s", "ste_g2a", "ste_a2s", "saoi", "objective_gp", "objective_l1",
    "objective_l2", "reward_l1", "reward_l2", "violations",
)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


@dataclass
class SlotTrace:
    """Packet events of one slot, used by the ledger replay oracle."""
    arrivals: np.ndarray                              # (N,) new packets
    gt_delivered: list = field(default_factory=list)  # (owner, gen_slot, uav)
    sat_delivered: list = field(default_factory=list)  # (owner, gen_slot, uav)
    gt_aoi: np.ndarray | None = None
    uav_aoi: np.ndarray | None = None


@dataclass
class SlotResult:
    record: dict
    rewards_l1: np.ndarray
    reward_l2: float
    trace: SlotTrace


class Simulator:
    """One episode of the two-layer network.

    Slot order: sense, L1 actions (projected), GT scheduling, G2A
    transmission and harvesting, GT ledgers / AFTU / priority, hand-over to
    the UAV buffers, L2 actions (projected), A2S NOMA transmission with
    outage, UAV energy and ledgers, motion, feasibility audit, metrics.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int, l1: L1Policy | None = None, l2: L2Policy | None = None,
                 run: int = 0):
        self.cfg = cfg
        self.seed = int(seed)
        self.l1 = l1
        self.l2 = l2
        self.run = run
        self.e_max = max_slot_energy(cfg)
        self.reset()

    def reset(self) -> WorldState:
        self.world = init_world(self.cfg, self.seed)
        self.outages = OutageCounter()
        self.violation_counts = {f"C{i}": 0 for i in range(1, 13)}
        self.projection_log = ProjectionLog()
        self.sum = {"saoi_wait": 0.0, "saoi_total": 0.0}
        if self.l1 is not None:
            self.l1.reset(self.world)
        if self.l2 is not None:
            self.l2.reset(self.world)
        return self.world

    @property
    def done(self) -> bool:
        w = self.world
        if w.t >= self.cfg.episode_slots:
            return True
        return any(u.battery - self.e_max < self.cfg.uav_batt_min for u in w.uavs)

    # -- helpers ---------------------------------------------------------------
    def satellites(self):
        """Per orbit: nearest satellite index, its central angle and position, in-service flags."""
        c = self.world.constellation
        t = self.world.time()
        near = c.nearest(t)
        idx = [j for j, _, _ in near]
        ang = np.array([a for _, a, _ in near])
        live = np.array([s for _, _, s in near])
        pos = np.array([c.sat_position(k, j, t) for k, j in enumerate(idx)])
        return idx, ang, live, pos

    def a2s_gains(self, sat_pos, in_service) -> np.ndarray:
        cfg = self.cfg
        uav_ecef = area_to_ecef(self.world.uav_positions, cfg)
        shadow = draw_shadowing_db(stream(self.seed, Purpose.A2S_CHANNEL, self.world.t), cfg,
                                   (cfg.n_uavs, cfg.n_leos))
        g = np.zeros((cfg.n_uavs, cfg.n_leos))
        for m in range(cfg.n_uavs):
            for k in range(cfg.n_leos):
                if in_service[k]:
                    d, _ = slant_geometry(uav_ecef[m], sat_pos[k])
                    g[m, k] = db_to_linear(a2s_budget_db(d, cfg) + shadow[m, k])
        return g

    # -- one slot --------------------------------------------------------------
    def step(self, action_l1: ActionL1 | None = None, action_l2_fn=None) -> SlotResult:
        cfg, w = self.cfg, self.world
        t = w.t
        n_gt, n_uav = cfg.n_gts, cfg.n_uavs
        conn = w.refresh_connectivity()
        q0 = w.uav_positions

        # lower layer
        raw = action_l1 if action_l1 is not None else self.l1.act(w)
        vel = project_motion(q0, raw.velocity, cfg, self.projection_log)
        a1 = ActionL1(vel, raw.wet, raw.collect)
        for m, u in enumerate(w.uavs):
            u.velocity, u.wet, u.collect = vel[m], int(a1.wet[m]), int(a1.collect[m])

        backlog = np.array([g.ledger.backlog_bits(t, cfg.packet_bits) for g in w.gts])
        modes = w.gt_array("mode")
        S = gt_uav_scheduling(conn.C, conn.dist_gu, modes, w.gt_array("priority"), backlog, a1.collect, cfg)
        w.S = S
        gains, _ = g2a_gains(w.gt_positions, q0, stream(self.seed, Purpose.G2A_CHANNEL, t), cfg)
        sinr = g2a_sinr(S, conn.C, gains, cfg)
        cap = (S * cfg.g2a_subchannel_hz * np.log2(1.0 + sinr) * cfg.slot_seconds).sum(axis=1)
        sent = np.minimum(cap, backlog)

        batt0 = w.gt_array("battery")
        new_b, harvested, gt_used, _ = harvest_and_battery(batt0, modes, a1.wet, gains, S, conn.C, cfg)

        trace = SlotTrace(arrivals=np.zeros(n_gt, dtype=int))
        uav_of = S.argmax(axis=1)
        collected = np.zeros(n_uav)
        for n, g in enumerate(w.gts):
            before = g.generated
            retired, _ = step_packets_aoi(g, float(sent[n]), t, cfg, stream(self.seed, Purpose.ARRIVALS, t, n))
            trace.arrivals[n] = g.generated - before
            g.battery = float(new_b[n])
            g.cum_bits += float(sent[n])
            if S[n].any():
                m = int(uav_of[n])
                collected[m] += sent[n]
                collect_and_buffer(w.uavs[m], retired, float(sent[n]), t)
                trace.gt_delivered += [(p.owner, p.gen_slot, m) for p in retired]
        gt_aoi = w.gt_array("aoi").astype(float)
        local = local_average_aoi(w.gt_positions, gt_aoi, cfg.sense_range_gt)
        new_modes = aftu_update(w.gt_array("battery"), gt_aoi, local, modes, cfg)
        request = nearest_covering_uav(conn.dist_gu, conn.C)
        prio, fairness = priority_and_fairness(gt_aoi, w.gt_array("cum_bits"), conn.C, new_modes, request, cfg)
        for n, g in enumerate(w.gts):
            g.mode = int(new_modes[n])
            g.priority = float(prio[n])

        # upper layer
        sat_idx, angles, live, sat_pos = self.satellites()
        a2s = self.a2s_gains(sat_pos, live)
        solar = draw_solar(stream(self.seed, Purpose.SOLAR, t), cfg, n_uav)
        for m, u in enumerate(w.uavs):
            u.harvested = float(solar[m])
        state = build_state(w, a2s, live, angles, sat_pos[live])
        raw2 = action_l2_fn(state) if action_l2_fn is not None else self.l2.act(state)
        a2 = project_l2(raw2, live, cfg)
        w.rho = a2.rho
        w.sat_assign = a2.assignment(cfg.n_leos, sat_idx, cfg.sats_per_leo)

        pending = state.pending
        link_gain = np.where(a2.orbit >= 0, a2s[np.arange(n_uav), np.clip(a2.orbit, 0, None)], 0.0)
        up_sinr = np.zeros(n_uav)
        if a2.access == "noma":
            for k in range(cfg.n_leos):
                on_k = np.flatnonzero(a2.orbit == k)
                if len(on_k) == 0:
                    continue
                g_k, p_k = link_gain[on_k], a2.power[on_k]
                first = noma_sinr_any_order(g_k, p_k, np.zeros(len(on_k)), cfg.a2s_noise, cfg.uav_tx_power_max)
                o_k = update_outage(link_rate(first, cfg.a2s_subchannel_hz), cfg.min_sat_rate)
                up_sinr[on_k] = noma_sinr_any_order(g_k, p_k, o_k, cfg.a2s_noise, cfg.uav_tx_power_max)
        else:
            act = a2.orbit >= 0
            up_sinr[act] = link_gain[act] * a2.power[act] / cfg.a2s_noise
        active = (a2.orbit >= 0) & (pending > 0)
        out = update_outage(link_rate(up_sinr, cfg.a2s_subchannel_hz), cfg.min_sat_rate, active)
        self.outages.add(out, active)
        w.outage = np.zeros_like(w.sat_assign)
        for m in np.flatnonzero(a2.orbit >= 0):
            w.outage[m, a2.orbit[m], sat_idx[a2.orbit[m]]] = out[m]

        hb0 = w.uav_array("harvest_batt").astype(float)
        thr, cap_u, e_hat = np.zeros(n_uav), np.zeros(n_uav), np.zeros(n_uav)
        uav_used = np.zeros(n_uav)
        for m, u in enumerate(w.uavs):
            if a2.orbit[m] >= 0:
                res = a2s_transmit(u, float(up_sinr[m]), float(a2.power[m]), float(a2.band[m]),
                                   float(a2.time_share[m]), t, cfg, bool(out[m]))
                thr[m], cap_u[m], e_hat[m] = res.throughput, res.capacity, res.energy
                trace.sat_delivered += [(p.owner, p.gen_slot, m) for p in res.retired]
            uav_used[m] = consumed_energy(int(S[:, m].sum()), float(np.linalg.norm(vel[m])), u.wet, cfg)
            u.battery, u.harvest_batt = uav_energy_step(u.battery, u.harvest_batt, uav_used[m], u.harvested,
                                                        e_hat[m], cfg)
            u.ledger.age_step()
            u.position = u.position + vel[m] * cfg.slot_seconds
        uav_aoi = w.uav_array("aoi").astype(float)

        # audit
        w.t = t + 1
        snap = SlotSnapshot(prev_positions=q0, positions=w.uav_positions, velocity=vel, S=S, C=conn.C, l2=a2,
                            in_service=live, harvest_before=hb0, harvest_gain=solar, a2s_energy=e_hat,
                            harvest_after=w.uav_array("harvest_batt").astype(float),
                            battery=w.uav_array("battery").astype(float), at_end=self.done)
        bad = violations(check_feasible(cfg, snap))
        for c in bad:
            self.violation_counts[c] += 1

        # metrics
        live_gt = sum(len(g.ledger) for g in w.gts)
        live_uav = sum(len(u.ledger) for u in w.uavs)
        waiting = live_uav if not live.any() else 0
        self.sum["saoi_wait"] += waiting
        self.sum["saoi_total"] += live_gt + live_uav
        A_G, A_U = float(gt_aoi.mean()), float(uav_aoi.mean())
        D_G, D_U, D_hat = float(sent.sum()), float(cap_u.sum()), float(thr.sum())
        E, E_hat = float(gt_used.sum() + uav_used.sum()), float(e_hat.sum())
        beta = cfg.scale_beta
        r1 = rewards_l1(gt_aoi, sinr, harvested, a1.wet, gains, uav_used, cfg)[2]
        r2 = reward_l2(uav_aoi, thr, e_hat)
        rec = {
            "run": self.run, "seed": self.seed, "l1": getattr(self.l1, "name", "external"),
            "l2": getattr(self.l2, "name", "external"), "t": t, "A_G": A_G, "A_U": A_U,
            "D_G": D_G, "D_U": D_U, "D_hat_U": D_hat, "E": E, "E_hat": E_hat, "F": fairness,
            "outage_freq": self.outages.frequency,
            "ete_g2a": _ratio(D_G, E) / cfg.slot_seconds, "ete_a2s": _ratio(D_hat, E_hat) / cfg.slot_seconds,
            "ste_g2a": D_G / (cfg.g2a_subchannels * cfg.g2a_subchannel_hz * cfg.slot_seconds),
            "ste_a2s": D_hat / (cfg.a2s_subchannels * cfg.a2s_subchannel_hz * cfg.slot_seconds),
            "saoi_wait": waiting, "saoi_total": live_gt + live_uav,
            "objective_gp": _ratio(D_hat, beta * (E + E_hat) * (A_G + A_U)),
            "objective_l1": _ratio(D_G, beta * E * A_G),
            "objective_l2": _ratio(D_U, beta * E_hat * A_U),
            "reward_l1": float(r1.mean()), "reward_l2": r2,
            "n_scheduled": int(S.sum()), "n_wet": int(a1.wet.sum()), "sats_in_service": int(live.sum()),
            "violations": len(bad),
        }
        trace.gt_aoi, trace.uav_aoi = gt_aoi, uav_aoi
        return SlotResult(rec, r1, r2, trace)


@dataclass
class EpisodeResult:
    records: list
    aggregate: dict
    violations: dict
    traces: list
    t_switch: int | None = None


def aggregate(records: list[dict], sums: dict | None = None, cfg: ScenarioConfig | None = None) -> dict:
    if not records:
        return {}
    col = {k: np.array([r[k] for r in records], dtype=float) for k in records[0] if k not in ("l1", "l2")}
    T = len(records)
    first = records[0]
    tau = cfg.slot_seconds if cfg else 1.0
    yw_g = cfg.g2a_subchannels * cfg.g2a_subchannel_hz if cfg else 1.0
    yw_s = cfg.a2s_subchannels * cfg.a2s_subchannel_hz if cfg else 1.0
    return {
        "run": first["run"], "seed": first["seed"], "l1": first["l1"], "l2": first["l2"], "slots": T,
        "A_G": col["A_G"].mean(), "A_U": col["A_U"].mean(), "D_G": col["D_G"].sum(), "D_U": col["D_U"].sum(),
        "D_hat_U": col["D_hat_U"].sum(), "E": col["E"].sum(), "E_hat": col["E_hat"].sum(),
        "F": records[-1]["F"], "outage_freq": records[-1]["outage_freq"],
        "ete_g2a": _ratio(col["D_G"].sum(), col["E"].sum()) / tau,
        "ete_a2s": _ratio(col["D_hat_U"].sum(), col["E_hat"].sum()) / tau,
        "ste_g2a": col["D_G"].sum() / (yw_g * tau * T), "ste_a2s": col["D_hat_U"].sum() / (yw_s * tau * T),
        "saoi": _ratio(col["saoi_wait"].sum(), col["saoi_total"].sum()),
        "objective_gp": col["objective_gp"].mean(), "objective_l1": col["objective_l1"].mean(),
        "objective_l2": col["objective_l2"].mean(), "reward_l1": col["reward_l1"].mean(),
        "reward_l2": col["reward_l2"].mean(), "violations": int(col["violations"].sum()),
    }


def pilot_switch_time(cfg: ScenarioConfig, l2_name: str, seed: int, l1_name: str = "pd-uav") -> int:
    """Greedy scan for the PD-UAV switch slot on a pilot episode.

    The grid is every tenth (``pd_switch_grid``) of the pilot's actual length;
    the slot maximising the mean lower-layer objective wins, ties to the
    earliest.
    """
    pilot_seed = int(stream(seed, Purpose.PILOT).integers(2**62))
    probe = run_episode(cfg, make_l1(l1_name, t_switch=cfg.episode_slots), l2_name, pilot_seed)
    horizon = max(probe.aggregate.get("slots", 1), 1)
    grid = sorted({int(round(horizon * i / cfg.pd_switch_grid)) for i in range(cfg.pd_switch_grid + 1)})
    best, best_val = grid[0], -math.inf
    for ts in grid:
        res = probe if ts >= horizon else run_episode(cfg, make_l1(l1_name, t_switch=ts), l2_name, pilot_seed)
        val = res.aggregate.get("objective_l1", 0.0)
        if val > best_val + 1e-15:
            best, best_val = ts, val
    return best


def run_episode(cfg: ScenarioConfig, l1, l2, seed: int, run: int = 0, strict: bool = False,
                keep_traces: bool = False) -> EpisodeResult:
    """Run one task cycle: until ``episode_slots`` or until some UAV could no
    longer afford a worst-case slot above ``B_min``."""
    l1p = make_l1(l1) if isinstance(l1, str) else l1
    l2p = make_l2(l2) if isinstance(l2, str) else l2
    t_switch = None
    if isinstance(l1p, PdUav) and l1p.t_switch is None:
        l1p.t_switch = t_switch = pilot_switch_time(cfg, l2p.name, seed, l1p.name)
    sim = Simulator(cfg, seed, l1p, l2p, run)
    records, traces = [], []
    while not sim.done:
        try:
            res = sim.step()
        except ConstraintViolation as exc:
            raise ConstraintViolation(exc.constraint, f"slot {sim.world.t}: {exc}") from exc
        records.append(res.record)
        if keep_traces:
            traces.append(res.trace)
        if strict and res.record["violations"]:
            bad = [c for c, v in sim.violation_counts.items() if v]
            raise ConstraintViolation(bad[0], f"slot {res.record['t']}: constraint audit failed ({', '.join(bad)})")
    agg = aggregate(records, sim.sum, cfg)
    return EpisodeResult(records, agg, dict(sim.violation_counts), traces, t_switch)


# --- output --------------------------------------------------------------------

def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def emit_metrics(results: list[EpisodeResult], out_dir, cfg: ScenarioConfig | None = None,
                 manifest: dict | None = None) -> dict:
    """Write ``slots.csv``, ``aggregate.csv`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "slots.csv", SLOT_COLUMNS, [r for res in results for r in res.records])
    _write_csv(out / "aggregate.csv", AGG_COLUMNS, [res.aggregate for res in results if res.aggregate])
    man = dict(manifest or {})
    man.setdefault("code_version", __version__)
    if cfg is not None:
        man["config_hash"] = config_hash(cfg)
        man["config"] = scenario_to_dict(cfg)
    man["runs"] = [{"run": r.aggregate.get("run"), "seed": r.aggregate.get("seed"), "l1": r.aggregate.get("l1"),
                    "l2": r.aggregate.get("l2"), "t_switch": r.t_switch} for r in results]
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man


def run_many(cfg: ScenarioConfig, pairs, seeds) -> list[EpisodeResult]:
    results = []
    for l1, l2 in pairs:
        for s in seeds:
            results.append(run_episode(cfg, l1, l2, s, run=len(results)))
    return results


def rerun_from_manifest(path, out_dir) -> dict:
    """Re-execute the runs listed in a manifest into ``out_dir``."""
    from .config import scenario_from_dict
    man = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = scenario_from_dict(man["config"])
    results = [run_episode(cfg, r["l1"], r["l2"], r["seed"], run=r["run"]) for r in man["runs"]]
    keep = {k: v for k, v in man.items() if k not in ("runs", "config", "config_hash")}
    return emit_metrics(results, out_dir, cfg, keep)


# --- sweeps --------------------------------------------------------------------

@dataclass
class SweepSpec:
    parameter: str
    values: list
    schemes: list          # (l1, l2) pairs
    seeds: list
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        if not self.values or not self.schemes:
            raise ValueError("sweep grid must be non-empty")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")


def run_sweep(spec: SweepSpec, out_csv=None) -> list[dict]:
    """One episode per (value, scheme, seed); failures are recorded, not raised."""
    rows = []
    for value in spec.values:
        try:
            cfg = spec.base.replace(**{spec.parameter: value})
        except Exception as exc:  # invalid grid point
            for l1, l2 in spec.schemes:
                for s in spec.seeds:
                    rows.append({"parameter": spec.parameter, "value": value, "l1": l1, "l2": l2, "seed": s,
                                 "error": str(exc)})
            continue
        for l1, l2 in spec.schemes:
            for s in spec.seeds:
                row = {"parameter": spec.parameter, "value": value, "l1": l1, "l2": l2, "seed": s, "error": ""}
                try:
                    row.update({k: v for k, v in run_episode(cfg, l1, l2, s).aggregate.items()
                                if k not in ("run", "seed", "l1", "l2")})
                except Exception as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    if out_csv is not None:
        cols = ["parameter", "value", "l1", "l2", "seed", "error"] + [c for c in AGG_COLUMNS
                                                                        if c not in ("run", "seed", "l1", "l2")]
        _write_csv(Path(out_csv), cols, rows)
    return rows


def summarize(rows: list[dict], metric: str) -> dict:
    """Mean and standard error of ``metric`` per (value, l1, l2)."""
    groups: dict = {}
    for r in rows:
        if r.get("error") or metric not in r:
            continue
        groups.setdefault((r["value"], r["l1"], r["l2"]), []).append(r[metric])
    out = {}
    for key, vals in groups.items():
        v = np.asarray(vals, dtype=float)
        out[key] = (float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0)
    return out
