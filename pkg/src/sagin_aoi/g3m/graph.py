"""Local heterogeneous graphs seen by each agent.

An agent (UAV, or the serving satellite for the upper layer) is the only
destination vertex.  Sources are grouped by device type; GTs never act as
destinations.  Exchange edges connect agents that can hear each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import ScenarioConfig, ScenarioError

GT_DIM = 6   # dx, dy, battery, mode, aoi, priority
UAV_DIM = 4  # dx, dy, dz, battery
SAT_DIM = 3  # gain (dB, scaled), in service, central angle
AGENT_DIM = 4


class GraphError(ScenarioError):
    pass


@dataclass
class AgentGraph:
    agent: np.ndarray                         # (AGENT_DIM,)
    sources: dict = field(default_factory=dict)  # type -> (n, d_type)

    def validate(self, type_dims: dict) -> None:
        if self.agent.shape != (AGENT_DIM,):
            raise GraphError(f"agent features must have shape ({AGENT_DIM},), got {self.agent.shape}")
        for kind, feats in self.sources.items():
            if kind not in type_dims:
                raise GraphError(f"unknown source type {kind!r}")
            if feats.ndim != 2 or feats.shape[1] != type_dims[kind]:
                raise GraphError(f"{kind} features must be (n, {type_dims[kind]}), got {feats.shape}")
            if not np.all(np.isfinite(feats)):
                raise GraphError(f"non-finite {kind} features")


@dataclass
class MultiGraph:
    agents: list[AgentGraph]
    exchange: list[np.ndarray]   # neighbour agent indices per agent
    positions: np.ndarray | None = None  # (n_agents, 3) for the mask layer

    def __len__(self) -> int:
        return len(self.agents)

    def validate(self, type_dims: dict) -> None:
        if len(self.exchange) != len(self.agents):
            raise GraphError("exchange list length differs from agent count")
        for i, (g, nb) in enumerate(zip(self.agents, self.exchange)):
            g.validate(type_dims)
            nb = np.asarray(nb, dtype=int)
            if np.any((nb < 0) | (nb >= len(self.agents))) or np.any(nb == i):
                raise GraphError(f"bad exchange neighbours for agent {i}: {nb.tolist()}")


def _uav_agent_features(u, cfg: ScenarioConfig) -> np.ndarray:
    z = (u.position[2] - cfg.alt_min) / max(cfg.alt_max - cfg.alt_min, 1e-9)
    return np.array([u.position[0] / cfg.area_width, u.position[1] / cfg.area_side, z,
                     u.battery / cfg.uav_batt_cap])


def build_l1_graph(world) -> MultiGraph:
    """Per-UAV local graphs from the current world (sensing relations)."""
    cfg = world.cfg
    conn = world.conn if world.conn is not None else world.refresh_connectivity()
    agents, exchange = [], []
    r_g, r_u = cfg.sense_range_gt, cfg.sense_range_uav
    for m, u in enumerate(world.uavs):
        gts = np.flatnonzero(conn.G[:, m])
        g_feat = np.array([[(world.gts[n].position[0] - u.position[0]) / r_g,
                            (world.gts[n].position[1] - u.position[1]) / r_g,
                            world.gts[n].battery / cfg.gt_batt_cap,
                            float(world.gts[n].mode),
                            np.log1p(world.gts[n].aoi) / 5.0,
                            world.gts[n].priority] for n in gts]).reshape(-1, GT_DIM)
        nbrs = np.flatnonzero(conn.U[:, m])
        u_feat = np.array([[*(world.uavs[j].position - u.position) / r_u,
                            world.uavs[j].battery / cfg.uav_batt_cap] for j in nbrs]).reshape(-1, UAV_DIM)
        agents.append(AgentGraph(_uav_agent_features(u, cfg), {"gt": g_feat, "uav": u_feat}))
        exchange.append(nbrs.astype(int))
    return MultiGraph(agents, exchange, world.uav_positions)


def build_l2_graph(state, cfg: ScenarioConfig) -> MultiGraph:
    """Single-agent graph of the upper layer: UAV sources and in-service satellites."""
    m = len(state.uav_aoi)
    u_feat = np.column_stack([np.log1p(state.uav_aoi) / 5.0, state.pending / (10 * cfg.packet_bits),
                              state.harvest / cfg.uav_harvest_cap, np.zeros(m)])
    gains = np.where(state.gains > 0, state.gains, 1e-30)
    k_feat = np.column_stack([(10 * np.log10(gains.max(axis=0)) + 150.0) / 50.0,
                              state.in_service.astype(float), state.central_angle])
    agent = np.array([state.in_service.mean(), state.pending.sum() / (10 * cfg.packet_bits * m),
                      state.harvest.mean() / cfg.uav_harvest_cap, np.log1p(state.uav_aoi.mean()) / 5.0])
    return MultiGraph([AgentGraph(agent, {"uav": u_feat, "sat": k_feat})], [np.zeros(0, dtype=int)])
